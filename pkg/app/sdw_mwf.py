"""Speech-distortion-weighted multichannel Wiener filter with an adaptive tradeoff.

Per frequency bin the filter solves

    (Phi_xx + mu * Phi_nn) w = Phi_xx u_ref

which minimises E{|w^H y - X_ref|^2 + mu |w^H n|^2}. The tradeoff is chosen per bin from
the desired residual noise level phi_0:

    s = phi_n1n1 / phi_0,    mu = min(s, s / SNR_i)
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from app.errors import ConfigValidationError, ShapeMismatchError, SingularSystemError
from app.models import SnrMode
from app.spatial_stats import SpatialStats, diagonal_loading
from app.stft import MultichannelSpectrum

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TradeoffParams:
    phi_0: float
    s: np.ndarray  # K, noise reduction control factor
    snr_i: np.ndarray  # K, +inf for noise-free bins
    mu: np.ndarray  # K


@dataclass(frozen=True)
class FilterBank:
    """Per-bin filters w (K x M), applied as w^H y."""

    weights: np.ndarray
    ref_channel: int = 0
    passthrough: np.ndarray | None = None  # K, bins whose solve failed

    @property
    def bins(self) -> int:
        return self.weights.shape[0]

    @property
    def channels(self) -> int:
        return self.weights.shape[1]

    @property
    def passthrough_fraction(self) -> float:
        if self.passthrough is None or self.bins == 0:
            return 0.0
        return float(np.count_nonzero(self.passthrough)) / self.bins


def unit_vector(channels: int, ref_channel: int = 0) -> np.ndarray:
    u = np.zeros(channels, dtype=np.complex128)
    u[ref_channel] = 1.0
    return u


def input_snr(stats: SpatialStats, snr_mode: SnrMode = SnrMode.PER_BIN) -> np.ndarray:
    """Reference-microphone SNR from second-order statistics, +inf where no noise was observed."""
    phi_x1x1 = np.maximum(stats.phi_y1y1 - stats.phi_n1n1, 0.0)
    match snr_mode:
        case SnrMode.PER_BIN:
            snr = np.full(stats.bins, np.inf)
            noisy = stats.phi_n1n1 > 0
            snr[noisy] = phi_x1x1[noisy] / stats.phi_n1n1[noisy]
        case SnrMode.BROADBAND:
            noise_power = float(stats.phi_n1n1.sum())
            broadband = float(phi_x1x1.sum()) / noise_power if noise_power > 0 else np.inf
            snr = np.full(stats.bins, broadband)
    return snr


def compute_tradeoff(stats: SpatialStats, phi_0: float, snr_mode: SnrMode = SnrMode.PER_BIN) -> TradeoffParams:
    """mu = min(s, s / SNR_i) with s = phi_n1n1 / phi_0; s/inf = 0 and s/0 caps at s."""
    if not phi_0 > 0:
        raise ConfigValidationError("phi_0", f"must be positive, got {phi_0}", "sdw_mwf")
    snr_i = input_snr(stats, snr_mode)
    s = stats.phi_n1n1 / phi_0
    ratio = np.full_like(s, np.inf)
    np.divide(s, snr_i, out=ratio, where=snr_i > 0)
    mu = np.minimum(s, ratio)
    return TradeoffParams(phi_0=phi_0, s=s, snr_i=snr_i, mu=mu)


def constant_tradeoff(stats: SpatialStats, phi_0: float, mu: float, snr_mode: SnrMode = SnrMode.PER_BIN) -> TradeoffParams:
    """Classic SDW-MWF with one fixed mu for every bin; s and snr_i are still reported."""
    if mu < 0:
        raise ConfigValidationError("fixed_mu", f"must be non-negative, got {mu}", "sdw_mwf")
    adaptive = compute_tradeoff(stats, phi_0, snr_mode)
    return TradeoffParams(phi_0=phi_0, s=adaptive.s, snr_i=adaptive.snr_i, mu=np.full(stats.bins, float(mu)))


def relative_phi_0(stats: SpatialStats, ratio: float) -> float:
    """phi_0 = ratio * mean over bins of phi_n1n1."""
    if not ratio > 0:
        raise ConfigValidationError("phi_0_ratio", f"must be positive, got {ratio}", "sdw_mwf")
    mean_noise = float(np.mean(stats.phi_n1n1))
    if mean_noise <= 0:
        # no noise observed: s is 0 for any positive phi_0
        logger.debug("no reference-channel noise in edge frames, using phi_0 = 1")
        return 1.0
    return ratio * mean_noise


def solve_filter(
    phi_xx: np.ndarray, phi_nn: np.ndarray, mu: float, ref_channel: int = 0, loading: float = 1e-10
) -> np.ndarray:
    """Solve (Phi_xx + mu Phi_nn) w = Phi_xx u_ref with a Cholesky factorisation."""
    if mu < 0:
        raise ConfigValidationError("mu", f"must be non-negative, got {mu}", "sdw_mwf")
    channels = phi_xx.shape[-1]
    if phi_xx.shape != (channels, channels) or phi_nn.shape != (channels, channels):
        raise ShapeMismatchError(f"covariances must be M x M, got {phi_xx.shape} and {phi_nn.shape}", "sdw_mwf")
    if mu == 0:
        # cost reduces to (w - u)^H Phi_xx (w - u), minimised by the selector itself
        return unit_vector(channels, ref_channel)

    # loaded twice: Phi_nn, then the whole system (rank-one Phi_xx with mu -> 0)
    system = diagonal_loading(phi_xx + mu * diagonal_loading(phi_nn, loading), loading)
    rhs = phi_xx[:, ref_channel]
    try:
        factor = cho_factor(system, lower=True, check_finite=True)
        w = cho_solve(factor, rhs)
    except (LinAlgError, ValueError) as e:
        raise SingularSystemError(f"system not positive definite: {e}") from e
    if not np.all(np.isfinite(w)):
        raise SingularSystemError("non-finite filter coefficients")
    return w


def solve_filters(
    stats: SpatialStats, tradeoff: TradeoffParams, ref_channel: int | None = None, loading: float = 1e-10
) -> FilterBank:
    """Per-bin solve; failing bins fall back to the reference-channel selector."""
    ref = stats.ref_channel if ref_channel is None else ref_channel
    passthrough = unit_vector(stats.channels, ref)
    weights = np.empty((stats.bins, stats.channels), dtype=np.complex128)
    failed = np.zeros(stats.bins, dtype=bool)
    for k in range(stats.bins):
        try:
            weights[k] = solve_filter(stats.phi_xx[k], stats.phi_nn[k], float(tradeoff.mu[k]), ref, loading)
        except SingularSystemError as e:
            logger.debug(f"bin {k}: {e}, passing reference channel through")
            weights[k] = passthrough
            failed[k] = True
    if failed.any():
        logger.warning(f"{np.count_nonzero(failed)} of {stats.bins} bins fell back to passthrough")
    return FilterBank(weights=weights, ref_channel=ref, passthrough=failed)


def apply_filter(filters: FilterBank, spectrum: MultichannelSpectrum) -> MultichannelSpectrum:
    """output(k, l) = w(k)^H y(k, l), returned as a one-channel spectrum."""
    if filters.channels != spectrum.channels or filters.bins != spectrum.bins:
        raise ShapeMismatchError(
            f"filters are {filters.bins} bins x {filters.channels} channels, "
            f"spectrum is {spectrum.bins} bins x {spectrum.channels} channels",
            "sdw_mwf",
        )
    output = np.einsum("km,mlk->lk", filters.weights.conj(), spectrum.values)
    return MultichannelSpectrum(output[np.newaxis], spectrum.sample_rate)


def residual_noise_power(w: np.ndarray, phi_nn: np.ndarray) -> np.ndarray:
    """w^H Phi_nn w, per bin for stacked inputs."""
    return np.einsum("...m,...mn,...n->...", w.conj(), phi_nn, w).real


def speech_distortion(w: np.ndarray, phi_xx: np.ndarray, ref_channel: int = 0) -> np.ndarray:
    """(w - u_ref)^H Phi_xx (w - u_ref)."""
    delta = np.array(w, dtype=np.complex128, copy=True)
    delta[..., ref_channel] -= 1.0
    return np.einsum("...m,...mn,...n->...", delta.conj(), phi_xx, delta).real


def sdw_objective(w: np.ndarray, phi_xx: np.ndarray, phi_nn: np.ndarray, mu: float, ref_channel: int = 0) -> np.ndarray:
    """Filter cost evaluated from covariances: distortion + mu * residual noise."""
    return speech_distortion(w, phi_xx, ref_channel) + mu * residual_noise_power(w, phi_nn)
