"""Tests for the tradeoff rule and the per-bin SDW-MWF solve."""

import numpy as np
import pytest

from app.errors import ConfigValidationError, ShapeMismatchError, SingularSystemError
from app.models import SnrMode
from app.sdw_mwf import (
    FilterBank,
    apply_filter,
    compute_tradeoff,
    constant_tradeoff,
    relative_phi_0,
    residual_noise_power,
    sdw_objective,
    solve_filter,
    solve_filters,
    speech_distortion,
    unit_vector,
)
from app.spatial_stats import SpatialStats
from app.stft import MultichannelSpectrum


def random_psd(rng: np.random.Generator, channels: int) -> np.ndarray:
    b = rng.standard_normal((channels, 2 * channels)) + 1j * rng.standard_normal((channels, 2 * channels))
    return b @ b.conj().T / (2 * channels)


def reference_stats(phi_n1n1: list[float], phi_y1y1: list[float]) -> SpatialStats:
    bins = len(phi_n1n1)
    eye = np.broadcast_to(np.eye(1, dtype=np.complex128), (bins, 1, 1)).copy()
    return SpatialStats(
        phi_xx=eye, phi_nn=eye, phi_n1n1=np.array(phi_n1n1, dtype=float), phi_y1y1=np.array(phi_y1y1, dtype=float)
    )


def explicit_objective(w, phi_xx, phi_nn, mu, ref=0):
    u = unit_vector(phi_xx.shape[0], ref)
    return (
        np.vdot(w, phi_xx @ w) - 2 * np.real(np.vdot(w, phi_xx @ u)) + np.vdot(u, phi_xx @ u) + mu * np.vdot(w, phi_nn @ w)
    ).real


def test_tradeoff_direct_evaluation():
    """Test s = 2 and SNR_i = 4 give mu = 0.5."""
    tradeoff = compute_tradeoff(reference_stats([2.0], [10.0]), phi_0=1.0)

    assert tradeoff.s[0] == 2.0
    assert tradeoff.snr_i[0] == 4.0
    assert tradeoff.mu[0] == 0.5


def test_tradeoff_low_snr_branch():
    """Test SNR_i <= 1 selects mu = s exactly, including SNR_i = 0."""
    tradeoff = compute_tradeoff(reference_stats([2.0, 2.0, 3.0], [3.0, 4.0, 1.0]), phi_0=0.5)

    assert np.all(tradeoff.snr_i <= 1)
    assert tradeoff.snr_i[2] == 0.0
    assert np.array_equal(tradeoff.mu, tradeoff.s)


def test_tradeoff_noise_free_bin():
    """Test phi_n1n1 = 0 gives s = 0, mu = 0 and infinite SNR."""
    tradeoff = compute_tradeoff(reference_stats([0.0], [5.0]), phi_0=1.0)

    assert tradeoff.s[0] == 0.0
    assert tradeoff.mu[0] == 0.0
    assert np.isinf(tradeoff.snr_i[0])


def test_tradeoff_branches_on_random_stats(rng):
    """Test mu = s where SNR_i <= 1 and s / SNR_i elsewhere, bin by bin."""
    noise = rng.uniform(0.1, 2.0, 200)
    stats = reference_stats(list(noise), list(noise * rng.uniform(0.5, 20.0, 200)))

    tradeoff = compute_tradeoff(stats, phi_0=0.3)

    low = tradeoff.snr_i <= 1
    assert low.any() and (~low).any()
    assert np.array_equal(tradeoff.mu[low], tradeoff.s[low])
    assert np.array_equal(tradeoff.mu[~low], tradeoff.s[~low] / tradeoff.snr_i[~low])


def test_halving_phi_0_doubles_s(rng):
    """Test s scales with 1 / phi_0 exactly."""
    noise = rng.uniform(0.1, 2.0, 64)
    stats = reference_stats(list(noise), list(3 * noise))

    full = compute_tradeoff(stats, phi_0=0.37)
    half = compute_tradeoff(stats, phi_0=0.185)

    assert np.array_equal(half.s, 2 * full.s)


def test_broadband_snr_is_shared():
    """Test broadband mode uses one SNR for every bin."""
    tradeoff = compute_tradeoff(reference_stats([1.0, 3.0], [2.0, 10.0]), phi_0=1.0, snr_mode=SnrMode.BROADBAND)

    assert np.all(tradeoff.snr_i == 2.0)
    assert np.allclose(tradeoff.mu, [0.5, 1.5])


@pytest.mark.parametrize("phi_0", [0.0, -1.0])
def test_non_positive_phi_0(phi_0):
    """Test phi_0 must be positive."""
    with pytest.raises(ConfigValidationError) as excinfo:
        compute_tradeoff(reference_stats([1.0], [2.0]), phi_0=phi_0)

    assert excinfo.value.key == "phi_0"


def test_constant_tradeoff():
    """Test fixed mode uses one mu everywhere."""
    tradeoff = constant_tradeoff(reference_stats([1.0, 0.0], [2.0, 1.0]), phi_0=1.0, mu=2.5)

    assert np.array_equal(tradeoff.mu, [2.5, 2.5])


def test_relative_phi_0():
    """Test phi_0 = ratio * mean noise power, and 1 when no noise was observed."""
    assert relative_phi_0(reference_stats([1.0, 3.0], [2.0, 4.0]), 0.1) == pytest.approx(0.2)
    assert relative_phi_0(reference_stats([0.0, 0.0], [2.0, 4.0]), 0.1) == 1.0


def test_mu_zero_passthrough(rng):
    """Test mu = 0 with invertible Phi_xx yields the selector."""
    phi_xx, phi_nn = random_psd(rng, 4), random_psd(rng, 4)

    w = solve_filter(phi_xx, phi_nn, 0.0, ref_channel=2)

    assert np.allclose(w, unit_vector(4, 2), atol=1e-8)


def test_scalar_wiener_gain():
    """Test M = 1, phi_xx = phi_nn = mu = 1 gives w = 1/2."""
    w = solve_filter(np.array([[1.0 + 0j]]), np.array([[1.0 + 0j]]), 1.0)

    assert w[0] == pytest.approx(0.5, abs=1e-9)


def test_objective_matches_explicit_form(rng):
    """Test the covariance objective equals its expanded quadratic form."""
    phi_xx, phi_nn = random_psd(rng, 3), random_psd(rng, 3)
    w = rng.standard_normal(3) + 1j * rng.standard_normal(3)

    assert sdw_objective(w, phi_xx, phi_nn, 0.7) == pytest.approx(explicit_objective(w, phi_xx, phi_nn, 0.7), rel=1e-12)


@pytest.mark.parametrize("channels", [1, 2, 4, 6])
@pytest.mark.parametrize("mu", [0.0, 0.1, 0.7, 1.0, 10.0])
def test_perturbation_optimality(rng, channels, mu):
    """Test no small perturbation of the solution lowers the objective."""
    for _ in range(50):
        phi_xx, phi_nn = random_psd(rng, channels), random_psd(rng, channels)
        w = solve_filter(phi_xx, phi_nn, mu)
        delta = rng.standard_normal((1000, channels)) + 1j * rng.standard_normal((1000, channels))
        delta *= 1e-3 / np.linalg.norm(delta, axis=1, keepdims=True)

        at_w = sdw_objective(w, phi_xx, phi_nn, mu)
        perturbed = sdw_objective(w + delta, phi_xx, phi_nn, mu)

        assert np.all(perturbed >= at_w - 1e-10 * (1 + abs(at_w)))


def test_monotone_noise_reduction_and_distortion(rng):
    """Test residual noise falls and distortion grows along a four-decade mu grid."""
    for channels in (2, 4, 6):
        phi_xx, phi_nn = random_psd(rng, channels), random_psd(rng, channels)
        grid = np.logspace(-2, 2, 40)
        filters = [solve_filter(phi_xx, phi_nn, mu) for mu in grid]

        noise = np.array([residual_noise_power(w, phi_nn) for w in filters])
        distortion = np.array([speech_distortion(w, phi_xx) for w in filters])

        assert np.all(np.diff(noise) <= 1e-10)
        assert np.all(np.diff(distortion) >= -1e-10)


@pytest.mark.parametrize("alpha", [1e-3, 7.0, 1e4])
def test_scale_invariance(rng, alpha):
    """Test scaling both covariances leaves w unchanged."""
    phi_xx, phi_nn = random_psd(rng, 6), random_psd(rng, 6)

    w = solve_filter(phi_xx, phi_nn, 0.8)
    scaled = solve_filter(alpha * phi_xx, alpha * phi_nn, 0.8)

    assert np.max(np.abs(scaled - w)) <= 1e-10 * max(1.0, np.max(np.abs(w)))


def test_negative_mu_rejected(rng):
    """Test mu must be non-negative."""
    with pytest.raises(ConfigValidationError):
        solve_filter(random_psd(rng, 2), random_psd(rng, 2), -0.1)


def test_shape_mismatch(rng):
    """Test covariances must share one M x M shape."""
    with pytest.raises(ShapeMismatchError):
        solve_filter(random_psd(rng, 2), random_psd(rng, 3), 1.0)


def test_singular_system():
    """Test an all-zero system is reported as singular."""
    zeros = np.zeros((3, 3), dtype=np.complex128)

    with pytest.raises(SingularSystemError):
        solve_filter(zeros, zeros, 1.0)


def test_failed_bins_fall_back_to_passthrough(rng):
    """Test singular bins get the selector and are counted."""
    phi_xx = np.stack([random_psd(rng, 2), np.zeros((2, 2)), random_psd(rng, 2)])
    phi_nn = np.stack([random_psd(rng, 2), np.zeros((2, 2)), random_psd(rng, 2)])
    stats = SpatialStats(
        phi_xx=phi_xx, phi_nn=phi_nn, phi_n1n1=phi_nn[:, 0, 0].real, phi_y1y1=(phi_xx + phi_nn)[:, 0, 0].real, ref_channel=1
    )
    tradeoff = constant_tradeoff(stats, phi_0=1.0, mu=1.0)

    filters = solve_filters(stats, tradeoff)

    assert filters.passthrough.tolist() == [False, True, False]
    assert filters.passthrough_fraction == pytest.approx(1 / 3)
    assert np.array_equal(filters.weights[1], unit_vector(2, 1))
    assert filters.ref_channel == 1


def test_apply_selector_returns_reference_channel(rng):
    """Test w = u_ref everywhere reproduces that channel exactly."""
    values = rng.standard_normal((4, 10, 9)) + 1j * rng.standard_normal((4, 10, 9))
    filters = FilterBank(np.tile(unit_vector(4, 3), (9, 1)), ref_channel=3)

    output = apply_filter(filters, MultichannelSpectrum(values, 16000))

    assert np.array_equal(output.values[0], values[3])


def test_apply_zero_filter(rng):
    """Test w = 0 silences the output."""
    values = rng.standard_normal((2, 5, 9)) + 0j

    output = apply_filter(FilterBank(np.zeros((9, 2), dtype=np.complex128)), MultichannelSpectrum(values, 16000))

    assert np.all(output.values == 0)


def test_apply_matches_loop_oracle(rng):
    """Test w^H y against an explicit per-entry dot product."""
    values = rng.standard_normal((3, 7, 5)) + 1j * rng.standard_normal((3, 7, 5))
    weights = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))

    output = apply_filter(FilterBank(weights), MultichannelSpectrum(values, 16000)).values[0]

    for frame in range(7):
        for k in range(5):
            expected = np.vdot(weights[k], values[:, frame, k])
            assert abs(output[frame, k] - expected) <= 1e-12 * max(1.0, abs(expected))


def test_apply_shape_mismatch(rng):
    """Test filters and spectrum must agree on channels and bins."""
    with pytest.raises(ShapeMismatchError):
        apply_filter(FilterBank(np.zeros((5, 2), dtype=np.complex128)), MultichannelSpectrum(np.zeros((3, 4, 5)), 16000))
