"""Exception hierarchy shared by all subsystems."""


class GsaError(Exception):
    """Base class for every error raised by this package."""


class FormatError(GsaError):
    """A file or byte stream does not match its declared layout."""


class UnsupportedFormatError(FormatError):
    """The layout is recognized but the encoding is not handled."""


class DegenerateInputError(GsaError):
    """Input is structurally valid but too small or empty to process."""


class DegenerateOutputError(GsaError):
    """A computation produced an unusable result (e.g. zero total duration)."""


class BoundsError(GsaError):
    """An index or interval falls outside its container."""


class ConfigurationError(GsaError):
    """Shapes, dimensions, or configuration values are inconsistent."""


class DataError(GsaError):
    """A dataset entry is malformed or inconsistent with its features."""


class TrainingError(GsaError):
    """The optimizer encountered a non-recoverable state."""


class CheckpointVersionError(GsaError):
    """A checkpoint is incompatible with the current build."""


class UsageError(GsaError):
    """Command-line arguments and inputs do not fit together."""
