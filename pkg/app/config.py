"""Flat key=value tool configuration.

Precedence: built-in defaults < config file < MWF_* environment variables < command-line flags.
"""

import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError
from sqlmodel import SQLModel, Field

from app.errors import ConfigValidationError
from app.models import (
    EnhanceConfig,
    MixConfig,
    MuMode,
    PhiZeroMode,
    RoverConfig,
    SnrMode,
    StftConfig,
    TieBreak,
    WavFormat,
    WindowKind,
)
from app.stft import check_cola

logger = logging.getLogger(__name__)

ENV_PREFIX = "MWF_"
_OPTIONAL_KEYS = {"phi_0_value", "snr_db"}


class ToolConfig(SQLModel, table=False):
    """Every tunable of every subcommand, one flat namespace"""

    # stft
    frame_len: int = Field(default=512, ge=1)
    hop: int = Field(default=128, ge=1)
    fft_size: int = Field(default=512, ge=1)
    window: WindowKind = Field(default=WindowKind.SQRT_HANN)
    # enhance
    n_edge_frames: int = Field(default=10, ge=1)
    phi_0_mode: PhiZeroMode = Field(default=PhiZeroMode.RELATIVE)
    phi_0_ratio: float = Field(default=0.1, gt=0)
    phi_0_value: Optional[float] = Field(default=None, gt=0)
    ref_channel: int = Field(default=0, ge=0)
    snr_mode: SnrMode = Field(default=SnrMode.PER_BIN)
    mu_mode: MuMode = Field(default=MuMode.ADAPTIVE)
    fixed_mu: float = Field(default=1.0, ge=0)
    diagonal_loading: float = Field(default=1e-10, ge=0)
    enhance_format: WavFormat = Field(default=WavFormat.PCM16)
    workers: int = Field(default=1, ge=1)
    # mix
    snr_db: Optional[float] = Field(default=None)
    snr_lo: float = Field(default=-6.0)
    snr_hi: float = Field(default=6.0)
    seed: int = Field(default=0, ge=0)
    mix_format: WavFormat = Field(default=WavFormat.FLOAT32)
    # rover
    alpha: float = Field(default=0.7, ge=0, le=1)
    null_confidence: float = Field(default=0.5, ge=0, le=1)
    tie_break: TieBreak = Field(default=TieBreak.CONFIDENCE_THEN_ORDER)
    casefold: bool = Field(default=True)
    strip_punctuation: bool = Field(default=False)
    # score
    group_by_tag: bool = Field(default=True)

    def stft_config(self) -> StftConfig:
        return _build(
            StftConfig, frame_len=self.frame_len, hop=self.hop, fft_size=self.fft_size, window=self.window
        )

    def enhance_config(self) -> EnhanceConfig:
        stft = self.stft_config()
        check_cola(stft)
        return _build(
            EnhanceConfig,
            stft=stft,
            n_edge_frames=self.n_edge_frames,
            phi_0_mode=self.phi_0_mode,
            phi_0_ratio=self.phi_0_ratio,
            phi_0_value=self.phi_0_value,
            ref_channel=self.ref_channel,
            snr_mode=self.snr_mode,
            mu_mode=self.mu_mode,
            fixed_mu=self.fixed_mu,
            diagonal_loading=self.diagonal_loading,
            output_format=self.enhance_format,
        )

    def mix_config(self) -> MixConfig:
        return _build(
            MixConfig,
            snr_db=self.snr_db,
            snr_lo=self.snr_lo,
            snr_hi=self.snr_hi,
            seed=self.seed,
            ref_channel=self.ref_channel,
            output_format=self.mix_format,
        )

    def rover_config(self) -> RoverConfig:
        return _build(
            RoverConfig,
            alpha=self.alpha,
            null_confidence=self.null_confidence,
            tie_break=self.tie_break,
            casefold=self.casefold,
            strip_punctuation=self.strip_punctuation,
        )


def _first_error_key(error: ValidationError) -> str:
    details = error.errors()
    if not details or not details[0].get("loc"):
        return "config"
    return ".".join(str(part) for part in details[0]["loc"])


def _first_error_message(error: ValidationError) -> str:
    details = error.errors()
    return details[0]["msg"] if details else str(error)


def _build(model: type[SQLModel], **values: Any) -> Any:
    try:
        return model.model_validate(values)
    except ValidationError as e:
        key = _first_error_key(e)
        logger.error(f"invalid configuration for {model.__name__}: {key}")
        raise ConfigValidationError(key, _first_error_message(e)) from e


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """`key = value` lines; `#` starts a comment."""
    values: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigValidationError(f"{source}:{number}", f"expected key = value, got {raw!r}")
        values[key.strip()] = value.strip()
    return values


def _check_keys(values: Mapping[str, Any], source: str) -> None:
    known = set(ToolConfig.model_fields)
    for key in values:
        if key not in known:
            raise ConfigValidationError(key, f"unknown key (from {source})")


def _clean(values: Mapping[str, Any]) -> dict[str, Any]:
    cleaned = {}
    for key, value in values.items():
        if key in _OPTIONAL_KEYS and isinstance(value, str) and value.lower() in ("", "none"):
            value = None
        cleaned[key] = value
    return cleaned


def env_overrides(environ: Mapping[str, str]) -> dict[str, str]:
    return {key[len(ENV_PREFIX) :].lower(): value for key, value in environ.items() if key.startswith(ENV_PREFIX)}


def load_tool_config(
    path: Optional[Path] = None,
    environ: Optional[Mapping[str, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ToolConfig:
    """Merge file, environment and flag values over the defaults and validate every key."""
    merged: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigValidationError("config", f"{path}: no such file")
        file_values = parse_config_text(path.read_text(), str(path))
        _check_keys(file_values, str(path))
        merged.update(file_values)
    if environ is not None:
        env_values = env_overrides(environ)
        _check_keys(env_values, "environment")
        merged.update(env_values)
    if overrides:
        _check_keys(overrides, "command line")
        merged.update({k: v for k, v in overrides.items() if v is not None})
    return _build(ToolConfig, **_clean(merged))


def defaults_text() -> str:
    lines = ["# chime-mwf defaults; override in a config file, MWF_<KEY> variables or flags"]
    for key, value in ToolConfig().model_dump().items():
        if value is None:
            rendered = ""
        elif isinstance(value, bool):
            rendered = str(value).lower()
        elif hasattr(value, "value"):
            rendered = value.value
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}".rstrip())
    return "\n".join(lines) + "\n"
