"""Noisy training material: clean multichannel speech plus noise at a controlled SNR."""

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.audio_io import UtteranceAudio, read_channels, write_wav
from app.errors import ChannelMismatchError, ConfigValidationError, ManifestError, SilentSignalError, ToolkitError
from app.models import MixConfig, MixRecord, UtteranceStatus

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixSpec:
    clean: UtteranceAudio
    noise: UtteranceAudio
    target_snr_db: float
    ref_channel: int = 0
    seed: int = 0


@dataclass(frozen=True)
class MixedScene:
    """A mixture together with the exact components it was built from."""

    mixture: UtteranceAudio
    clean: UtteranceAudio
    noise: UtteranceAudio  # scaled noise segment
    gain: float
    noise_offset: int


@dataclass(frozen=True)
class MixEntry:
    utterance_id: str
    output_path: Path
    clean_paths: list[Path]
    noise_paths: list[Path]


def signal_power(samples: np.ndarray) -> float:
    return float(np.mean(np.square(samples)))


def snr_db(clean: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * np.log10(signal_power(clean) / signal_power(noise))


def sample_snr(lo_db: float, hi_db: float, seed: int) -> float:
    """Uniform draw from [lo_db, hi_db] with numpy's PCG64 generator seeded by `seed`."""
    if lo_db > hi_db:
        raise ConfigValidationError("snr_range", f"lower bound {lo_db} exceeds upper bound {hi_db}", "mixer")
    if lo_db == hi_db:
        return float(lo_db)
    return float(np.random.default_rng(seed).uniform(lo_db, hi_db))


def derive_seed(seed: int, utterance_id: str) -> int:
    """Per-utterance seed, stable across platforms and scheduling: seed XOR blake2b(id)."""
    digest = hashlib.blake2b(utterance_id.encode("utf-8"), digest_size=4).digest()
    return seed ^ int.from_bytes(digest, "little")


def mix_components(spec: MixSpec) -> MixedScene:
    """clean + g * noise_segment, g chosen so the reference-channel SNR equals the target."""
    clean, noise = spec.clean, spec.noise
    if clean.channels != noise.channels:
        raise ChannelMismatchError(f"clean has {clean.channels} channels, noise {noise.channels}", "mixer")
    if clean.sample_rate != noise.sample_rate:
        raise ChannelMismatchError(f"clean at {clean.sample_rate} Hz, noise at {noise.sample_rate} Hz", "mixer")
    if noise.num_samples < clean.num_samples:
        raise ChannelMismatchError(
            f"noise ({noise.num_samples} samples) shorter than clean ({clean.num_samples})", "mixer"
        )
    if not 0 <= spec.ref_channel < clean.channels:
        raise ConfigValidationError("ref_channel", f"{spec.ref_channel} outside {clean.channels} channels", "mixer")

    rng = np.random.default_rng(spec.seed)
    offset = int(rng.integers(0, noise.num_samples - clean.num_samples + 1))
    segment = noise.samples[:, offset : offset + clean.num_samples]

    p_clean = signal_power(clean.samples[spec.ref_channel])
    p_noise = signal_power(segment[spec.ref_channel])
    if p_clean <= 0:
        raise SilentSignalError("clean signal is silent at the reference channel")
    if p_noise <= 0:
        raise SilentSignalError("noise segment is silent at the reference channel")

    gain = float(np.sqrt(p_clean / (p_noise * 10.0 ** (spec.target_snr_db / 10.0))))
    scaled = gain * segment
    return MixedScene(
        mixture=UtteranceAudio(clean.samples + scaled, clean.sample_rate),
        clean=clean,
        noise=UtteranceAudio(scaled, clean.sample_rate),
        gain=gain,
        noise_offset=offset,
    )


def mix_at_snr(spec: MixSpec) -> UtteranceAudio:
    return mix_components(spec).mixture


def parse_mix_manifest(path: Path) -> list[MixEntry]:
    """Lines: utterance-id, output path, comma-separated clean files, comma-separated noise files."""
    entries = []
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ManifestError(f"{path}:{number}: expected 4 tab-separated fields, got {len(fields)}", "mixer")
        utterance_id, output, clean, noise = fields
        entries.append(
            MixEntry(
                utterance_id=utterance_id,
                output_path=Path(output),
                clean_paths=[Path(p) for p in clean.split(",") if p],
                noise_paths=[Path(p) for p in noise.split(",") if p],
            )
        )
    return entries


def mix_entry(entry: MixEntry, config: MixConfig) -> MixRecord:
    seed = derive_seed(config.seed, entry.utterance_id)
    target = config.snr_db if config.snr_db is not None else sample_snr(config.snr_lo, config.snr_hi, seed)
    spec = MixSpec(
        clean=read_channels(entry.clean_paths),
        noise=read_channels(entry.noise_paths),
        target_snr_db=target,
        ref_channel=config.ref_channel,
        seed=seed,
    )
    scene = mix_components(spec)
    write_wav(scene.mixture, entry.output_path, config.output_format)
    return MixRecord(
        utterance_id=entry.utterance_id, snr_db=target, gain=scene.gain, noise_offset=scene.noise_offset, seed=seed
    )


def mix_corpus(entries: list[MixEntry], config: MixConfig) -> list[MixRecord]:
    """Mix every entry; failures are recorded and the batch continues. Rows sorted by utterance id."""
    records = []
    for entry in entries:
        try:
            records.append(mix_entry(entry, config))
            logger.info(f"mixed {entry.utterance_id} -> {entry.output_path}")
        except (ToolkitError, OSError) as e:
            logger.error(f"mixing {entry.utterance_id} failed: {e}")
            records.append(
                MixRecord(
                    utterance_id=entry.utterance_id,
                    status=UtteranceStatus.FAILED,
                    seed=derive_seed(config.seed, entry.utterance_id),
                    error=str(e),
                )
            )
    return sorted(records, key=lambda r: r.utterance_id)
