"""Exception types raised across the package."""


class PulError(Exception):
    """Base class for all errors raised by :mod:`pul`."""


class InvalidInputError(PulError, ValueError):
    """An argument violates a documented precondition."""


class EmptyTrainingSetError(PulError, ValueError):
    """Fine-tuning was asked to train on zero samples."""


class InternalInvariantError(PulError, RuntimeError):
    """A state that other modules guarantee against was observed."""


class FormatError(PulError, ValueError):
    """A file could not be parsed.

    ``offset`` is the byte offset at which parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(FormatError):
    """A file carries a format version this build cannot read."""


class HistoryLockedError(PulError, OSError):
    """Another writer holds the advisory lock on a history file."""
