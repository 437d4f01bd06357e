"""Error hierarchy shared by every module of the toolkit."""


class ToolkitError(Exception):
    """Base error; `module` names the toolkit module that raised it."""

    module = "app"

    def __init__(self, message: str, module: str | None = None):
        super().__init__(message)
        if module is not None:
            self.module = module


class UsageError(ToolkitError):
    """Bad command line: unknown flags, missing subcommand."""

    module = "cli"


class ConfigValidationError(ToolkitError, ValueError):
    """A configuration value violates its module's invariants."""

    module = "config"

    def __init__(self, key: str, message: str, module: str | None = None):
        super().__init__(f"{key}: {message}", module)
        self.key = key


class AudioFileMissingError(ToolkitError, FileNotFoundError):
    module = "audio_io"


class MalformedWavError(ToolkitError, ValueError):
    module = "audio_io"


class UnsupportedCodecError(ToolkitError, ValueError):
    module = "audio_io"


class AudioWriteError(ToolkitError, OSError):
    """The output file could not be created or written."""

    module = "audio_io"


class ChannelMismatchError(ToolkitError, ValueError):
    """Inputs disagree on channel count or sample rate, or the list is empty."""

    module = "audio_io"


class ShapeMismatchError(ToolkitError, ValueError):
    pass


class UtteranceTooShortError(ToolkitError, ValueError):
    pass


class SingularSystemError(ToolkitError, ArithmeticError):
    """Per-bin SDW-MWF system could not be factorised even after diagonal loading."""

    module = "sdw_mwf"

    def __init__(self, message: str, bin_index: int | None = None):
        super().__init__(message)
        self.bin_index = bin_index


class SilentSignalError(ToolkitError, ValueError):
    module = "mixer"


class ManifestError(ToolkitError, ValueError):
    pass


class AlignmentError(ToolkitError, ValueError):
    module = "rover"


class HypothesisFormatError(ToolkitError, ValueError):
    module = "rover"


class TranscriptMismatchError(ToolkitError, ValueError):
    """Reference and hypothesis files cover different utterance ids."""

    module = "wer_eval"

    def __init__(self, missing: list[str], extra: list[str]):
        parts = []
        if missing:
            parts.append(f"missing from hypothesis: {', '.join(missing)}")
        if extra:
            parts.append(f"not in reference: {', '.join(extra)}")
        super().__init__("; ".join(parts))
        self.missing = missing
        self.extra = extra
