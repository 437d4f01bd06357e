"""STFT analysis of multichannel utterances and weighted overlap-add synthesis."""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sp_fft
from scipy.signal import get_window

from app.audio_io import UtteranceAudio
from app.errors import ConfigValidationError, ShapeMismatchError, UtteranceTooShortError
from app.models import StftConfig, WindowKind

logger = logging.getLogger(__name__)

COLA_TOLERANCE = 1e-10


@dataclass(frozen=True)
class MultichannelSpectrum:
    """Complex STFT values, M x L x K (channels, frames, bins)."""

    values: np.ndarray
    sample_rate: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 3:
            raise ShapeMismatchError(f"expected M x L x K values, got shape {values.shape}", "stft")
        object.__setattr__(self, "values", values)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def frames(self) -> int:
        return self.values.shape[1]

    @property
    def bins(self) -> int:
        return self.values.shape[2]

    def channel(self, index: int) -> "MultichannelSpectrum":
        return MultichannelSpectrum(self.values[index : index + 1], self.sample_rate)

    def by_bin(self) -> np.ndarray:
        """Observation vectors y(k, l) laid out as K x L x M."""
        return np.transpose(self.values, (2, 1, 0))


@lru_cache(maxsize=16)
def _window_pair(frame_len: int, kind: WindowKind) -> tuple[np.ndarray, np.ndarray]:
    match kind:
        case WindowKind.SQRT_HANN:
            analysis = np.sqrt(get_window("hann", frame_len, fftbins=True))
            synthesis = analysis
        case WindowKind.HANN:
            analysis = get_window("hann", frame_len, fftbins=True)
            synthesis = np.ones(frame_len)
        case WindowKind.RECT:
            analysis = np.ones(frame_len)
            synthesis = analysis
    analysis.setflags(write=False)
    synthesis.setflags(write=False)
    return analysis, synthesis


def window_pair(config: StftConfig) -> tuple[np.ndarray, np.ndarray]:
    """Analysis and synthesis windows of length frame_len."""
    return _window_pair(config.frame_len, config.window)


def cola_deviation(config: StftConfig) -> float:
    """Relative deviation of the overlapped analysis*synthesis product from a constant."""
    analysis, synthesis = window_pair(config)
    product = analysis * synthesis
    padded = np.zeros(-(-config.frame_len // config.hop) * config.hop)
    padded[: config.frame_len] = product
    envelope = padded.reshape(-1, config.hop).sum(axis=0)
    mean = envelope.mean()
    if mean <= 0:
        return float("inf")
    return float(np.max(np.abs(envelope - mean)) / mean)


def cola_gain(config: StftConfig) -> float:
    """Overlap-added analysis*synthesis level of the fully overlapped interior."""
    analysis, synthesis = window_pair(config)
    return float(np.sum(analysis * synthesis)) / config.hop


def check_cola(config: StftConfig) -> None:
    deviation = cola_deviation(config)
    if deviation > COLA_TOLERANCE:
        raise ConfigValidationError(
            "window",
            f"{config.window.value} with frame_len={config.frame_len}, hop={config.hop} "
            f"violates constant overlap-add (deviation {deviation:.3g})",
            "stft",
        )


def num_frames(num_samples: int, config: StftConfig) -> int:
    if num_samples < config.frame_len:
        return 0
    return 1 + (num_samples - config.frame_len) // config.hop


def analyze(audio: UtteranceAudio, config: StftConfig) -> MultichannelSpectrum:
    """Windowed real FFT of every frame of every channel; edge frames are not padded."""
    frames = num_frames(audio.num_samples, config)
    if frames == 0:
        raise UtteranceTooShortError(
            f"utterance of {audio.num_samples} samples is shorter than one frame ({config.frame_len})", "stft"
        )
    analysis, _ = window_pair(config)
    framed = np.lib.stride_tricks.sliding_window_view(audio.samples, config.frame_len, axis=-1)
    framed = framed[:, :: config.hop, :][:, :frames, :] * analysis
    values = sp_fft.rfft(framed, n=config.fft_size, axis=-1)
    return MultichannelSpectrum(values, audio.sample_rate)


def synthesize(spectrum: MultichannelSpectrum, config: StftConfig) -> UtteranceAudio:
    """Weighted overlap-add inverse of analyze for a single-channel spectrum."""
    if spectrum.channels != 1:
        raise ShapeMismatchError(f"synthesize expects one channel, got {spectrum.channels}", "stft")
    if spectrum.bins != config.num_bins:
        raise ConfigValidationError(
            "fft_size", f"spectrum has {spectrum.bins} bins but fft_size {config.fft_size} implies {config.num_bins}", "stft"
        )
    analysis, synthesis = window_pair(config)
    frames = sp_fft.irfft(spectrum.values[0], n=config.fft_size, axis=-1)[:, : config.frame_len]

    length = (spectrum.frames - 1) * config.hop + config.frame_len if spectrum.frames else 0
    output = np.zeros(length)
    envelope = np.zeros(length)
    product = analysis * synthesis
    for index in range(spectrum.frames):
        start = index * config.hop
        output[start : start + config.frame_len] += frames[index] * synthesis
        envelope[start : start + config.frame_len] += product

    # partially overlapped edges are divided by at least half the COLA gain, so they taper
    output /= np.maximum(envelope, 0.5 * cola_gain(config))
    return UtteranceAudio(output[np.newaxis, :], spectrum.sample_rate)
