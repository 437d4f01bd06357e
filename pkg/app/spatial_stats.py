"""Per-bin spatial covariance estimation from an utterance's multichannel spectrum.

Noise statistics come from the leading and trailing frames of the utterance, which are
assumed to hold no target speech. The target covariance is the PSD projection of the
observed covariance minus the noise covariance.
"""

import logging
from dataclasses import dataclass

import numpy as np

from app.errors import ShapeMismatchError, UtteranceTooShortError
from app.stft import MultichannelSpectrum

logger = logging.getLogger(__name__)

DEFAULT_EDGE_FRAMES = 10


@dataclass(frozen=True)
class NoiseStats:
    phi_nn: np.ndarray  # K x M x M
    phi_n1n1: np.ndarray  # K, noise power at the reference microphone


@dataclass(frozen=True)
class SpatialStats:
    """Covariance pair per bin plus reference-microphone powers."""

    phi_xx: np.ndarray  # K x M x M
    phi_nn: np.ndarray  # K x M x M
    phi_n1n1: np.ndarray  # K
    phi_y1y1: np.ndarray  # K
    ref_channel: int = 0

    @property
    def bins(self) -> int:
        return self.phi_nn.shape[0]

    @property
    def channels(self) -> int:
        return self.phi_nn.shape[-1]


def _outer_average(y: np.ndarray) -> np.ndarray:
    """Mean of y y^H over frames for K x L x M observations."""
    return np.einsum("klm,kln->kmn", y, y.conj()) / y.shape[1]


def estimate_noise_stats(
    spectrum: MultichannelSpectrum, n_edge_frames: int = DEFAULT_EDGE_FRAMES, ref_channel: int = 0
) -> NoiseStats:
    """Average y y^H over the first and last n_edge_frames frames (2 * n_edge_frames outer products)."""
    if n_edge_frames < 1:
        raise UtteranceTooShortError(f"n_edge_frames must be >= 1, got {n_edge_frames}", "spatial_stats")
    if spectrum.frames < 2 * n_edge_frames:
        raise UtteranceTooShortError(
            f"utterance has {spectrum.frames} frames, {2 * n_edge_frames} edge frames requested", "spatial_stats"
        )
    if not 0 <= ref_channel < spectrum.channels:
        raise ShapeMismatchError(f"ref_channel {ref_channel} outside {spectrum.channels} channels", "spatial_stats")

    y = spectrum.by_bin()
    edges = np.concatenate([y[:, :n_edge_frames], y[:, y.shape[1] - n_edge_frames :]], axis=1)
    phi_nn = _outer_average(edges)
    return NoiseStats(phi_nn=phi_nn, phi_n1n1=phi_nn[:, ref_channel, ref_channel].real.copy())


def observed_covariance(spectrum: MultichannelSpectrum) -> np.ndarray:
    """Phi_yy per bin, averaged over all frames."""
    return _outer_average(spectrum.by_bin())


def project_psd(matrices: np.ndarray) -> np.ndarray:
    """Clamp negative eigenvalues of each Hermitian matrix to zero.

    Bins that are already positive semidefinite are returned unchanged.
    """
    hermitian = 0.5 * (matrices + np.conj(np.swapaxes(matrices, -1, -2)))
    eigenvalues, eigenvectors = np.linalg.eigh(hermitian)
    negative = eigenvalues.min(axis=-1) < 0
    if not np.any(negative):
        return hermitian
    clamped = np.maximum(eigenvalues[negative], 0.0)
    vectors = eigenvectors[negative]
    projected = hermitian.copy()
    projected[negative] = np.einsum("kmi,ki,kni->kmn", vectors, clamped, vectors.conj())
    return projected


def estimate_signal_stats(spectrum: MultichannelSpectrum, phi_nn: np.ndarray) -> np.ndarray:
    """Phi_xx = PSD projection of (Phi_yy - Phi_nn) per bin."""
    expected = (spectrum.bins, spectrum.channels, spectrum.channels)
    if phi_nn.shape != expected:
        raise ShapeMismatchError(f"noise covariance has shape {phi_nn.shape}, expected {expected}", "spatial_stats")
    return project_psd(observed_covariance(spectrum) - phi_nn)


def estimate_spatial_stats(
    spectrum: MultichannelSpectrum, n_edge_frames: int = DEFAULT_EDGE_FRAMES, ref_channel: int = 0
) -> SpatialStats:
    noise = estimate_noise_stats(spectrum, n_edge_frames, ref_channel)
    phi_yy = observed_covariance(spectrum)
    phi_xx = project_psd(phi_yy - noise.phi_nn)
    logger.debug(f"estimated spatial stats for {spectrum.bins} bins, {spectrum.channels} channels")
    return SpatialStats(
        phi_xx=phi_xx,
        phi_nn=noise.phi_nn,
        phi_n1n1=noise.phi_n1n1,
        phi_y1y1=phi_yy[:, ref_channel, ref_channel].real.copy(),
        ref_channel=ref_channel,
    )


def diagonal_loading(phi: np.ndarray, factor: float = 1e-10) -> np.ndarray:
    """Add factor * trace/M to the diagonal of each M x M matrix."""
    channels = phi.shape[-1]
    load = factor * np.trace(phi, axis1=-2, axis2=-1).real / channels
    return phi + load[..., np.newaxis, np.newaxis] * np.eye(channels)
