"""Tests for per-bin covariance estimation."""

import numpy as np
import pytest

from app.errors import ShapeMismatchError, UtteranceTooShortError
from app.models import StftConfig
from app.scenes import make_scene
from app.spatial_stats import (
    diagonal_loading,
    estimate_noise_stats,
    estimate_signal_stats,
    estimate_spatial_stats,
    observed_covariance,
    project_psd,
)
from app.stft import MultichannelSpectrum, analyze


def random_spectrum(rng: np.random.Generator, channels: int = 6, frames: int = 40, bins: int = 17) -> MultichannelSpectrum:
    values = rng.standard_normal((channels, frames, bins)) + 1j * rng.standard_normal((channels, frames, bins))
    return MultichannelSpectrum(values, 16000)


def test_zero_edge_frames_zero_noise(rng):
    """Test silent edge frames give zero noise statistics."""
    spectrum = random_spectrum(rng)
    values = spectrum.values.copy()
    values[:, :10] = 0
    values[:, -10:] = 0

    noise = estimate_noise_stats(MultichannelSpectrum(values, 16000), n_edge_frames=10)

    assert np.all(noise.phi_nn == 0)
    assert np.all(noise.phi_n1n1 == 0)


def test_single_edge_frame_mean():
    """Test |Y|^2 values {1, 3} at the two edges average to 2."""
    values = np.array([[[1.0], [5.0], [np.sqrt(3.0)]]])

    noise = estimate_noise_stats(MultichannelSpectrum(values, 16000), n_edge_frames=1)

    assert noise.phi_n1n1[0] == pytest.approx(2.0, abs=1e-15)


def test_noise_stats_loop_oracle(rng):
    """Test the noise covariance against an explicit accumulation loop."""
    spectrum = random_spectrum(rng)

    noise = estimate_noise_stats(spectrum, n_edge_frames=10)

    frames = [*range(10), *range(spectrum.frames - 10, spectrum.frames)]
    for k in range(spectrum.bins):
        expected = np.zeros((6, 6), dtype=np.complex128)
        for frame in frames:
            y = spectrum.values[:, frame, k]
            expected += np.outer(y, y.conj())
        expected /= len(frames)
        assert np.max(np.abs(noise.phi_nn[k] - expected)) <= 1e-12 * np.max(np.abs(expected))
        assert noise.phi_n1n1[k] == pytest.approx(expected[0, 0].real, rel=1e-12)


def test_too_short_for_edge_frames(rng):
    """Test L < 2 n_edge_frames is rejected."""
    with pytest.raises(UtteranceTooShortError):
        estimate_noise_stats(random_spectrum(rng, frames=15), n_edge_frames=10)


def test_ref_channel_out_of_range(rng):
    """Test the reference channel must exist."""
    with pytest.raises(ShapeMismatchError):
        estimate_noise_stats(random_spectrum(rng, channels=2), n_edge_frames=10, ref_channel=2)


def test_zero_noise_gives_observed_covariance(rng):
    """Test Phi_nn = 0 leaves Phi_xx = Phi_yy."""
    spectrum = random_spectrum(rng)
    phi_yy = observed_covariance(spectrum)

    phi_xx = estimate_signal_stats(spectrum, np.zeros_like(phi_yy))

    assert np.allclose(phi_xx, phi_yy, rtol=0, atol=1e-12)


def test_noise_equals_observed_gives_zero(rng):
    """Test Phi_yy = Phi_nn clamps Phi_xx to zero."""
    spectrum = random_spectrum(rng)
    phi_yy = observed_covariance(spectrum)

    phi_xx = estimate_signal_stats(spectrum, phi_yy)

    assert np.max(np.abs(phi_xx)) <= 1e-12


def test_shape_mismatch(rng):
    """Test a noise covariance of the wrong shape is rejected."""
    with pytest.raises(ShapeMismatchError):
        estimate_signal_stats(random_spectrum(rng), np.zeros((17, 5, 5)))


def test_hermitian_and_psd(rng):
    """Test every bin is Hermitian and PSD up to the trace tolerance."""
    stats = estimate_spatial_stats(random_spectrum(rng), n_edge_frames=10)

    for phi in (stats.phi_nn, stats.phi_xx):
        assert np.allclose(phi, np.conj(np.swapaxes(phi, -1, -2)), atol=1e-12)
        minimum = np.linalg.eigvalsh(phi).min(axis=-1)
        trace = np.trace(phi, axis1=-2, axis2=-1).real
        assert np.all(minimum >= -1e-10 * trace)


def test_project_psd_leaves_psd_bins_unchanged(rng):
    """Test bins that are already PSD pass through the projection."""
    a = rng.standard_normal((4, 3, 3)) + 1j * rng.standard_normal((4, 3, 3))
    psd = a @ np.conj(np.swapaxes(a, -1, -2))

    assert np.allclose(project_psd(psd), psd, atol=1e-12)


def test_scaling_by_alpha(rng):
    """Test scaling the spectrum by alpha scales covariances by alpha^2."""
    spectrum = random_spectrum(rng)
    scaled = MultichannelSpectrum(2.5 * spectrum.values, 16000)

    base = estimate_spatial_stats(spectrum, n_edge_frames=10)
    stats = estimate_spatial_stats(scaled, n_edge_frames=10)

    assert np.allclose(stats.phi_nn, 6.25 * base.phi_nn, rtol=1e-12, atol=1e-12)
    assert np.allclose(stats.phi_xx, 6.25 * base.phi_xx, rtol=1e-10, atol=1e-10)


def test_channel_permutation_equivariance(rng):
    """Test permuting channels permutes rows and columns of Phi_nn."""
    spectrum = random_spectrum(rng)
    order = np.array([3, 0, 5, 1, 4, 2])

    base = estimate_noise_stats(spectrum, n_edge_frames=10)
    permuted = estimate_noise_stats(MultichannelSpectrum(spectrum.values[order], 16000), n_edge_frames=10)

    assert np.allclose(permuted.phi_nn, base.phi_nn[:, order][:, :, order], atol=1e-12)


def test_target_covariance_matches_clean_stream():
    """Test Phi_xx estimated from a mixture approaches the clean-stream covariance."""
    config = StftConfig()
    scene = make_scene(seed=3, snr_db=15.0, channels=4, duration=10.0)
    mixture = analyze(scene.mixture, config)
    clean = analyze(scene.clean, config)
    assert mixture.frames >= 1000

    stats = estimate_spatial_stats(mixture, n_edge_frames=10)
    oracle = observed_covariance(clean)

    errors = np.linalg.norm(stats.phi_xx - oracle, axis=(1, 2)) / np.linalg.norm(oracle, axis=(1, 2))
    # speech-dominated band
    assert np.median(errors[4:64]) <= 0.1


def test_diagonal_loading_scales_with_trace():
    """Test loading adds factor * trace / M to the diagonal."""
    phi = np.array([[[2.0, 0.0], [0.0, 4.0]]], dtype=np.complex128)

    loaded = diagonal_loading(phi, 0.1)

    assert np.allclose(loaded[0], [[2.3, 0.0], [0.0, 4.3]])
