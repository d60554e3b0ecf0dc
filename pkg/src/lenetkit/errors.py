"""Exception types shared across the engine.

Shape and label errors are raised loudly instead of relying on implicit
broadcasting or silent clipping: the architecture is small and fixed, so
any mismatch is a caller bug.
"""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class InvalidShape(EngineError):
    """Tensor shapes do not satisfy an operation's contract."""


class InvalidLabel(EngineError):
    """A class label is outside [0, num_classes)."""


class InvalidConfig(EngineError):
    """A configuration value violates its documented range."""


class InvalidState(EngineError):
    """An operation was called with a stale or missing forward trace."""


class InvalidPartition(EngineError):
    """A positive-class set for binarization is empty or covers all classes."""


class EmptyDataset(EngineError):
    """A training or evaluation set contains no samples."""


class DivergenceDetected(EngineError):
    """Training produced a non-finite loss.

    Carries the epoch records completed so far so callers can persist the
    last good state.
    """

    def __init__(self, message, records=None, epoch=None):
        super().__init__(message)
        self.records = records if records is not None else []
        self.epoch = epoch


class DatasetNotFound(EngineError):
    """The dataset root or split directory does not exist."""


class ImageDecodeError(EngineError):
    """An image file could not be decoded."""


class IoError(EngineError):
    """A filesystem write failed."""


class CorruptCheckpoint(EngineError):
    """Checkpoint bytes fail magic, CRC, or structural validation."""


class UnsupportedVersion(EngineError):
    """Checkpoint format version is not supported by this build."""


class CurvesFormatError(EngineError):
    """A training-curve CSV does not match the expected layout."""
