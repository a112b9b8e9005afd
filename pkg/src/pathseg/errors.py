"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
numeric failures during training exit 3, and I/O or shape problems exit 4.
"""


class PathsegError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(PathsegError):
    """Invalid user-supplied configuration (bad field, unknown model, ...)."""


class SchemaError(PathsegError):
    """An input file does not match the expected schema."""


class IngestionError(PathsegError):
    """A run file is structurally valid but semantically broken (e.g. time going backwards)."""


class PreprocessingError(PathsegError):
    """Data cannot be preprocessed (e.g. a column with no recorded values)."""


class WindowingError(PathsegError):
    """A run is too short for the requested window length."""


class ShapeError(PathsegError):
    """Array shapes do not chain or do not match a fitted model."""


class DomainError(PathsegError):
    """A numeric argument is outside the operation's domain."""


class TrainingDivergenceError(PathsegError):
    """Loss became NaN/Inf during training; carries epoch and batch context."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class EnvelopeError(PathsegError):
    """A serialized model file is unreadable or corrupt."""
