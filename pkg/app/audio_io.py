"""Multichannel PCM audio: reading, writing and assembling per-microphone files."""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf

from app.errors import (
    AudioFileMissingError,
    AudioWriteError,
    ChannelMismatchError,
    MalformedWavError,
    UnsupportedCodecError,
)
from app.models import WavFormat

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 16000
# per-mic recordings may differ by a frame of device skew
LENGTH_SKEW_WARNING = 16

_SUBTYPES = {WavFormat.PCM16: "PCM_16", WavFormat.FLOAT32: "FLOAT"}


@dataclass(frozen=True)
class UtteranceAudio:
    """Real-valued samples, channel-major (M x T), double precision."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ChannelMismatchError(f"expected an M x T sample matrix, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ChannelMismatchError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate

    def channel(self, index: int) -> "UtteranceAudio":
        return UtteranceAudio(self.samples[index : index + 1], self.sample_rate)


def _check_riff(path: Path) -> None:
    with path.open("rb") as fh:
        header = fh.read(12)
    if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
        raise MalformedWavError(f"{path}: not a RIFF/WAVE file")


def read_wav(path: Path | str) -> UtteranceAudio:
    """Read a PCM16 or float32 WAV file; 16-bit samples are scaled by 1/32768."""
    path = Path(path)
    if not path.is_file():
        raise AudioFileMissingError(f"{path}: no such file")
    _check_riff(path)
    try:
        info = sf.info(str(path))
    except sf.LibsndfileError as e:
        logger.error(f"libsndfile rejected {path}: {e}")
        raise MalformedWavError(f"{path}: {e}") from e
    if info.subtype not in _SUBTYPES.values():
        raise UnsupportedCodecError(f"{path}: unsupported sample format {info.subtype}")

    pcm16 = info.subtype == "PCM_16"
    try:
        data, rate = sf.read(str(path), dtype="int16" if pcm16 else "float32", always_2d=True)
    except sf.LibsndfileError as e:
        logger.error(f"libsndfile could not read {path}: {e}")
        raise MalformedWavError(f"{path}: {e}") from e
    samples = data.T.astype(np.float64)
    if pcm16:
        samples /= 32768.0
    return UtteranceAudio(np.ascontiguousarray(samples), int(rate))


def write_wav(audio: UtteranceAudio, path: Path | str, format: WavFormat = WavFormat.PCM16) -> None:
    """Write audio so that read_wav restores it; pcm16 clamps to [-1, 1] first."""
    path = Path(path)
    match format:
        case WavFormat.PCM16:
            clipped = np.clip(audio.samples, -1.0, 1.0)
            data = np.clip(np.round(clipped * 32768.0), -32768, 32767).astype(np.int16)
        case WavFormat.FLOAT32:
            data = audio.samples.astype(np.float32)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        sf.write(str(path), data.T, audio.sample_rate, subtype=_SUBTYPES[format], format="WAV")
    except (sf.LibsndfileError, OSError) as e:
        logger.error(f"could not write {path}: {e}")
        raise AudioWriteError(f"{path}: {e}") from e


def merge_channels(files: list[UtteranceAudio]) -> UtteranceAudio:
    """Stack mono recordings into one M-channel utterance; list order is channel order."""
    if not files:
        raise ChannelMismatchError("no channels to merge")
    rates = {f.sample_rate for f in files}
    if len(rates) != 1:
        raise ChannelMismatchError(f"mismatched sample rates: {sorted(rates)}")
    for index, f in enumerate(files):
        if f.channels != 1:
            raise ChannelMismatchError(f"input {index} has {f.channels} channels, expected mono")

    lengths = [f.num_samples for f in files]
    length = min(lengths)
    if max(lengths) - length > LENGTH_SKEW_WARNING:
        logger.warning(f"channel lengths differ by {max(lengths) - length} samples, truncating to {length}")
    samples = np.vstack([f.samples[:, :length] for f in files])
    return UtteranceAudio(samples, files[0].sample_rate)


def read_channels(paths: list[Path]) -> UtteranceAudio:
    """Read one file per microphone, or a single interleaved multichannel file."""
    if len(paths) == 1:
        return read_wav(paths[0])
    return merge_channels([read_wav(p) for p in paths])
