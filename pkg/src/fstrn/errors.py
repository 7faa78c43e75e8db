"""Exception hierarchy shared by every fstrn module."""


class FstrnError(Exception):
    """Base class for all errors raised by the package."""


class DimensionError(FstrnError, ValueError):
    """Array shapes disagree.

    Attributes:
        axis (str | None): Name of the offending axis, when one can be named.
    """

    def __init__(self, message: str, axis: str | None = None) -> None:
        """Initialize with a message and the axis that failed the check."""
        super().__init__(message)
        self.axis = axis


class NumericError(FstrnError, ArithmeticError):
    """A NaN or infinity reached an operation boundary."""


class ConfigError(FstrnError, ValueError):
    """A configuration value is invalid or missing."""


class FormatError(FstrnError):
    """A binary artifact could not be decoded.

    Attributes:
        offset (int): Byte offset at which decoding failed.
    """

    def __init__(self, message: str, offset: int) -> None:
        """Initialize with a message and the failing byte offset."""
        super().__init__(f'{message} (offset {offset})')
        self.offset = offset


class IngestionError(FormatError):
    """A video file could not be read."""


class DegradationError(FstrnError):
    """Frames are too small for the requested degradation."""


class AlignmentError(FstrnError):
    """HR crop coordinates do not map onto whole LR pixels."""


class DomainError(FstrnError, ValueError):
    """A bound evaluator was called outside its domain.

    Attributes:
        term (str): Name of the intermediate quantity that left the domain.
    """

    def __init__(self, message: str, term: str) -> None:
        """Initialize with a message and the offending term name."""
        super().__init__(message)
        self.term = term


class DivergenceError(FstrnError):
    """Training produced a non-finite loss.

    Attributes:
        checkpoint (str | None): Path of the last good checkpoint, if any was written.
    """

    def __init__(self, message: str, checkpoint: str | None = None) -> None:
        """Initialize with a message and the retained checkpoint path."""
        super().__init__(message)
        self.checkpoint = checkpoint
