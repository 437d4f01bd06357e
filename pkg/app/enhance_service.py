"""Service layer for per-utterance and corpus SDW-MWF enhancement."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from app.audio_io import UtteranceAudio, read_channels, write_wav
from app.errors import ManifestError, ShapeMismatchError, ToolkitError
from app.models import EnhanceConfig, MuMode, PhiZeroMode, UtteranceDiagnostics, UtteranceStatus
from app.mixer import snr_db
from app.scenes import SyntheticScene
from app.sdw_mwf import (
    FilterBank,
    TradeoffParams,
    apply_filter,
    compute_tradeoff,
    constant_tradeoff,
    relative_phi_0,
    residual_noise_power,
    solve_filters,
    speech_distortion,
)
from app.spatial_stats import SpatialStats, estimate_spatial_stats
from app.stft import MultichannelSpectrum, analyze, check_cola, synthesize

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ManifestEntry:
    utterance_id: str
    output_path: Path
    input_paths: list[Path]


@dataclass(frozen=True)
class EnhancementResult:
    audio: UtteranceAudio
    stats: SpatialStats
    tradeoff: TradeoffParams
    filters: FilterBank

    @property
    def mean_mu(self) -> float:
        return float(np.mean(self.tradeoff.mu))


@dataclass(frozen=True)
class SceneEvaluation:
    input_snr_db: float
    output_snr_db: float

    @property
    def gain_db(self) -> float:
        return self.output_snr_db - self.input_snr_db


def fit_length(audio: UtteranceAudio, num_samples: int) -> UtteranceAudio:
    """Zero-extend or truncate to num_samples."""
    samples = audio.samples[:, :num_samples]
    if samples.shape[1] < num_samples:
        samples = np.pad(samples, ((0, 0), (0, num_samples - samples.shape[1])))
    return UtteranceAudio(samples, audio.sample_rate)


def shadow_filter(
    filters: FilterBank, clean: MultichannelSpectrum, noise: MultichannelSpectrum
) -> tuple[MultichannelSpectrum, MultichannelSpectrum]:
    """Apply the mixture-derived filters to the clean and noise components separately."""
    return apply_filter(filters, clean), apply_filter(filters, noise)


def _db_ratio(numerator: float, denominator: float) -> Optional[float]:
    if numerator <= 0 or denominator <= 0:
        return None
    return float(10.0 * np.log10(numerator / denominator))


def parse_manifest(path: Path) -> list[ManifestEntry]:
    """Lines: utterance-id, output path, then one input path per microphone (tab-separated)."""
    entries = []
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 3:
            raise ManifestError(f"{path}:{number}: expected id, output and at least one input", "enhance_pipeline")
        entries.append(ManifestEntry(fields[0], Path(fields[1]), [Path(p) for p in fields[2:]]))
    ids = [e.utterance_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ManifestError(f"{path}: duplicate utterance ids", "enhance_pipeline")
    return entries


class EnhanceService:
    """Runs the STFT -> statistics -> tradeoff -> filter -> inverse STFT pipeline."""

    def __init__(self, config: Optional[EnhanceConfig] = None):
        self.config = config or EnhanceConfig()
        check_cola(self.config.stft)

    def resolve_phi_0(self, stats: SpatialStats) -> float:
        match self.config.phi_0_mode:
            case PhiZeroMode.ABSOLUTE:
                if self.config.phi_0_value is None:
                    raise ValueError("phi_0_value is required in absolute mode")
                return self.config.phi_0_value
            case PhiZeroMode.RELATIVE:
                return relative_phi_0(stats, self.config.phi_0_ratio)

    def tradeoff(self, stats: SpatialStats) -> TradeoffParams:
        phi_0 = self.resolve_phi_0(stats)
        match self.config.mu_mode:
            case MuMode.FIXED:
                return constant_tradeoff(stats, phi_0, self.config.fixed_mu, self.config.snr_mode)
            case MuMode.ADAPTIVE:
                return compute_tradeoff(stats, phi_0, self.config.snr_mode)

    def design(self, spectrum: MultichannelSpectrum) -> tuple[SpatialStats, TradeoffParams, FilterBank]:
        stats = estimate_spatial_stats(spectrum, self.config.n_edge_frames, self.config.ref_channel)
        tradeoff = self.tradeoff(stats)
        filters = solve_filters(stats, tradeoff, self.config.ref_channel, self.config.diagonal_loading)
        return stats, tradeoff, filters

    def enhance(self, audio: UtteranceAudio) -> EnhancementResult:
        """Enhance one utterance; output is mono at the input's rate and length."""
        if not 0 <= self.config.ref_channel < audio.channels:
            raise ShapeMismatchError(
                f"ref_channel {self.config.ref_channel} outside {audio.channels} channels", "enhance_pipeline"
            )
        spectrum = analyze(audio, self.config.stft)
        stats, tradeoff, filters = self.design(spectrum)
        enhanced = synthesize(apply_filter(filters, spectrum), self.config.stft)
        return EnhancementResult(
            audio=fit_length(enhanced, audio.num_samples), stats=stats, tradeoff=tradeoff, filters=filters
        )

    def enhance_utterance(self, audio: UtteranceAudio) -> UtteranceAudio:
        return self.enhance(audio).audio

    def diagnostics(self, utterance_id: str, audio: UtteranceAudio, result: EnhancementResult) -> UtteranceDiagnostics:
        stats, filters = result.stats, result.filters
        noise_in = float(np.sum(stats.phi_n1n1))
        target_in = float(np.sum(np.real(stats.phi_xx[:, stats.ref_channel, stats.ref_channel])))
        noise_out = float(np.sum(residual_noise_power(filters.weights, stats.phi_nn)))
        distortion = float(np.sum(speech_distortion(filters.weights, stats.phi_xx, filters.ref_channel)))
        return UtteranceDiagnostics(
            utterance_id=utterance_id,
            status=UtteranceStatus.OK,
            num_channels=audio.channels,
            mean_mu=result.mean_mu,
            passthrough_fraction=filters.passthrough_fraction,
            noise_reduction_db=_db_ratio(noise_in, noise_out),
            distortion_db=_db_ratio(distortion, target_in),
            input_duration=audio.duration,
            output_duration=result.audio.duration,
        )

    def enhance_entry(self, entry: ManifestEntry) -> UtteranceDiagnostics:
        try:
            audio = read_channels(entry.input_paths)
            result = self.enhance(audio)
            write_wav(result.audio, entry.output_path, self.config.output_format)
        except (ToolkitError, OSError, np.linalg.LinAlgError) as e:
            logger.error(f"enhancing {entry.utterance_id} failed: {e}")
            return UtteranceDiagnostics(utterance_id=entry.utterance_id, status=UtteranceStatus.FAILED, error=str(e)[:500])
        logger.info(f"enhanced {entry.utterance_id} -> {entry.output_path}")
        return self.diagnostics(entry.utterance_id, audio, result)

    def enhance_corpus(self, entries: list[ManifestEntry], workers: int = 1) -> list[UtteranceDiagnostics]:
        """One enhanced file per entry; failures are recorded and the batch continues.

        Rows are sorted by utterance id, so the report does not depend on scheduling.
        """
        if workers <= 1:
            rows = [self.enhance_entry(entry) for entry in entries]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(self.enhance_entry, entries))
        return sorted(rows, key=lambda row: row.utterance_id)

    def evaluate_scene(self, scene: SyntheticScene) -> SceneEvaluation:
        """Input and output SNR at the reference channel, measured by shadow filtering."""
        ref = self.config.ref_channel
        spectrum = analyze(scene.mixture, self.config.stft)
        _, _, filters = self.design(spectrum)
        clean_out, noise_out = shadow_filter(
            filters, analyze(scene.clean, self.config.stft), analyze(scene.noise, self.config.stft)
        )
        clean_time = synthesize(clean_out, self.config.stft).samples[0]
        noise_time = synthesize(noise_out, self.config.stft).samples[0]
        span = clean_time.shape[0]
        return SceneEvaluation(
            input_snr_db=snr_db(scene.clean.samples[ref, :span], scene.noise.samples[ref, :span]),
            output_snr_db=snr_db(clean_time, noise_time),
        )


def enhance_utterance(audio: UtteranceAudio, config: Optional[EnhanceConfig] = None) -> UtteranceAudio:
    service = enhance_service if config is None else EnhanceService(config)
    return service.enhance_utterance(audio)


def enhance_corpus(
    entries: list[ManifestEntry], config: Optional[EnhanceConfig] = None, workers: int = 1
) -> list[UtteranceDiagnostics]:
    service = enhance_service if config is None else EnhanceService(config)
    return service.enhance_corpus(entries, workers)


# Default service instance
enhance_service = EnhanceService()
