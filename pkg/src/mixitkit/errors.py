"""Exception hierarchy shared by all mixitkit modules."""


class MixitKitError(Exception):
    """Base class for all library errors."""


class InvalidInputError(MixitKitError, ValueError):
    """An argument violates an operation's precondition."""


class FormatError(MixitKitError, ValueError):
    """A file or byte stream does not match its declared format."""


class UnsupportedError(MixitKitError, ValueError):
    """Well-formed input that this library deliberately does not handle."""


class ConfigError(MixitKitError, ValueError):
    """A run configuration is malformed or inconsistent."""


class DataError(MixitKitError, ValueError):
    """A dataset or example is missing or inconsistent."""


class TrainingError(MixitKitError, RuntimeError):
    """A numeric failure during optimization (non-finite gradient or loss)."""


class InvalidStateError(MixitKitError, RuntimeError):
    """An object was used outside its legal lifecycle (e.g. a consumed tape)."""


class UndefinedMetricError(MixitKitError, ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
