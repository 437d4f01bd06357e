"""Synthetic microphone-array scenes with known target and noise components.

The target is a speech-shaped point source: low-pass coloured noise with a syllable-rate
amplitude envelope, silent at both ends of the utterance so that edge frames hold noise
only. Each microphone receives it with its own fractional delay and gain. Noise is
independent per microphone (spatially diffuse) and stationary.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from app.audio_io import DEFAULT_SAMPLE_RATE, UtteranceAudio
from app.mixer import MixSpec, mix_components


@dataclass(frozen=True)
class SyntheticScene:
    clean: UtteranceAudio  # target image at every microphone
    noise: UtteranceAudio
    snr_db: float

    @property
    def mixture(self) -> UtteranceAudio:
        return UtteranceAudio(self.clean.samples + self.noise.samples, self.clean.sample_rate)


def speech_shaped_source(
    num_samples: int, rng: np.random.Generator, sample_rate: int = DEFAULT_SAMPLE_RATE, lead: float = 0.25
) -> np.ndarray:
    white = rng.standard_normal(num_samples)
    coloured = lfilter([1.0, 0.5], [1.0, -0.9], white)
    t = np.arange(num_samples) / sample_rate
    envelope = 0.6 + 0.4 * np.sin(2 * np.pi * 4.0 * t + rng.uniform(0, 2 * np.pi))
    silent = int(lead * sample_rate)
    envelope[:silent] = 0.0
    envelope[num_samples - silent :] = 0.0
    return coloured * envelope


def propagate(source: np.ndarray, delays: np.ndarray, gains: np.ndarray) -> np.ndarray:
    """Delay (in samples, fractional) and scale a mono source to each microphone."""
    spectrum = np.fft.rfft(source)
    freqs = np.fft.rfftfreq(source.shape[-1])
    steering = gains[:, np.newaxis] * np.exp(-2j * np.pi * freqs[np.newaxis, :] * delays[:, np.newaxis])
    return np.fft.irfft(steering * spectrum[np.newaxis, :], n=source.shape[-1])


def diffuse_noise(channels: int, num_samples: int, rng: np.random.Generator) -> np.ndarray:
    white = rng.standard_normal((channels, num_samples))
    return lfilter([1.0], [1.0, -0.5], white, axis=-1)


def make_scene(
    seed: int,
    snr_db: float = 0.0,
    channels: int = 6,
    duration: float = 3.0,
    sample_rate: int = DEFAULT_SAMPLE_RATE,
    noise_free: bool = False,
) -> SyntheticScene:
    """Build a scene whose reference-channel (channel 0) SNR is snr_db."""
    rng = np.random.default_rng(seed)
    num_samples = int(duration * sample_rate)
    source = speech_shaped_source(num_samples, rng, sample_rate)
    delays = np.concatenate([[0.0], rng.uniform(-4.0, 4.0, channels - 1)])
    gains = np.concatenate([[1.0], rng.uniform(0.7, 1.0, channels - 1)])
    clean = UtteranceAudio(0.1 * propagate(source, delays, gains), sample_rate)
    if noise_free:
        return SyntheticScene(clean=clean, noise=UtteranceAudio(np.zeros_like(clean.samples), sample_rate), snr_db=np.inf)

    noise = UtteranceAudio(diffuse_noise(channels, num_samples, rng), sample_rate)
    mixed = mix_components(MixSpec(clean=clean, noise=noise, target_snr_db=snr_db, ref_channel=0, seed=seed))
    return SyntheticScene(clean=mixed.clean, noise=mixed.noise, snr_db=snr_db)
