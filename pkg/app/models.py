from sqlmodel import SQLModel, Field
from pydantic import model_validator
from datetime import datetime
from typing import Optional
from enum import Enum


class WindowKind(str, Enum):
    """Analysis/synthesis window pair used by the STFT"""

    SQRT_HANN = "sqrt_hann"
    HANN = "hann"
    RECT = "rect"


class SnrMode(str, Enum):
    """How the input SNR entering the tradeoff rule is measured"""

    PER_BIN = "per_bin"
    BROADBAND = "broadband"


class PhiZeroMode(str, Enum):
    """How the desired residual noise level is configured"""

    RELATIVE = "relative"
    ABSOLUTE = "absolute"


class MuMode(str, Enum):
    ADAPTIVE = "adaptive"
    FIXED = "fixed"


class WavFormat(str, Enum):
    PCM16 = "pcm16"
    FLOAT32 = "float32"


class TieBreak(str, Enum):
    """Rule for words with equal scores in a slot; NULL loses ties under either"""

    CONFIDENCE_THEN_ORDER = "confidence_then_order"
    SYSTEM_ORDER = "system_order"


class UtteranceStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


# Non-persistent schemas (configuration, validated on construction)
class StftConfig(SQLModel, table=False):
    """Framing of the short-time Fourier transform"""

    frame_len: int = Field(default=512, ge=1)
    hop: int = Field(default=128, ge=1)
    fft_size: int = Field(default=512, ge=1)
    window: WindowKind = Field(default=WindowKind.SQRT_HANN)

    @model_validator(mode="after")
    def _check_lengths(self) -> "StftConfig":
        if not self.hop <= self.frame_len <= self.fft_size:
            raise ValueError(
                f"require hop <= frame_len <= fft_size, got {self.hop}, {self.frame_len}, {self.fft_size}"
            )
        return self

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1


class EnhanceConfig(SQLModel, table=False):
    """Parameters of the per-utterance SDW-MWF enhancement"""

    stft: StftConfig = Field(default_factory=StftConfig)
    n_edge_frames: int = Field(default=10, ge=1)
    phi_0_mode: PhiZeroMode = Field(default=PhiZeroMode.RELATIVE)
    phi_0_ratio: float = Field(default=0.1, gt=0)
    phi_0_value: Optional[float] = Field(default=None, gt=0)
    ref_channel: int = Field(default=0, ge=0)  # 0 is channel 1 of the array
    snr_mode: SnrMode = Field(default=SnrMode.PER_BIN)
    mu_mode: MuMode = Field(default=MuMode.ADAPTIVE)
    fixed_mu: float = Field(default=1.0, ge=0)
    diagonal_loading: float = Field(default=1e-10, ge=0)
    output_format: WavFormat = Field(default=WavFormat.PCM16)

    @model_validator(mode="after")
    def _check_phi_0(self) -> "EnhanceConfig":
        if self.phi_0_mode == PhiZeroMode.ABSOLUTE and self.phi_0_value is None:
            raise ValueError("phi_0_value is required when phi_0_mode is absolute")
        return self


class MixConfig(SQLModel, table=False):
    """Defaults for noisy-mixture generation"""

    snr_db: Optional[float] = Field(default=None)  # fixed SNR; None draws from [snr_lo, snr_hi]
    snr_lo: float = Field(default=-6.0)
    snr_hi: float = Field(default=6.0)
    seed: int = Field(default=0, ge=0)
    ref_channel: int = Field(default=0, ge=0)
    output_format: WavFormat = Field(default=WavFormat.FLOAT32)

    @model_validator(mode="after")
    def _check_range(self) -> "MixConfig":
        if self.snr_lo > self.snr_hi:
            raise ValueError(f"snr_lo {self.snr_lo} exceeds snr_hi {self.snr_hi}")
        return self


class RoverConfig(SQLModel, table=False):
    """Voting parameters for hypothesis combination"""

    alpha: float = Field(default=0.7, ge=0, le=1)
    null_confidence: float = Field(default=0.5, ge=0, le=1)
    tie_break: TieBreak = Field(default=TieBreak.CONFIDENCE_THEN_ORDER)
    casefold: bool = Field(default=True)
    strip_punctuation: bool = Field(default=False)


# Persistent models (stored in database)
class UtteranceDiagnostics(SQLModel, table=True):
    """One enhanced utterance of a corpus run"""

    __tablename__ = "utterance_diagnostics"  # type: ignore[assignment]

    id: Optional[int] = Field(default=None, primary_key=True)
    run_id: str = Field(default="", max_length=64)
    utterance_id: str = Field(max_length=200)
    status: UtteranceStatus = Field(default=UtteranceStatus.OK)
    num_channels: int = Field(default=0, ge=0)
    mean_mu: Optional[float] = Field(default=None)
    passthrough_fraction: Optional[float] = Field(default=None)
    noise_reduction_db: Optional[float] = Field(default=None)
    distortion_db: Optional[float] = Field(default=None)
    input_duration: Optional[float] = Field(default=None)
    output_duration: Optional[float] = Field(default=None)
    error: Optional[str] = Field(default=None, max_length=500)
    created_at: datetime = Field(default_factory=datetime.utcnow)


# Report rows (non-persistent)
class MixRecord(SQLModel, table=False):
    """One generated mixture"""

    utterance_id: str
    status: UtteranceStatus = Field(default=UtteranceStatus.OK)
    snr_db: Optional[float] = Field(default=None)
    gain: Optional[float] = Field(default=None)
    noise_offset: Optional[int] = Field(default=None)
    seed: int = Field(default=0)
    error: Optional[str] = Field(default=None)


class WerCounts(SQLModel, table=False):
    """Edit counts of one utterance, one tag group or a whole corpus"""

    utterance_id: str = Field(default="")
    tag: Optional[str] = Field(default=None)
    substitutions: int = Field(default=0, ge=0)
    deletions: int = Field(default=0, ge=0)
    insertions: int = Field(default=0, ge=0)
    hits: int = Field(default=0, ge=0)

    @property
    def ref_len(self) -> int:
        return self.substitutions + self.deletions + self.hits

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        if self.ref_len == 0:
            return 0.0 if self.errors == 0 else float("inf")
        return self.errors / self.ref_len
