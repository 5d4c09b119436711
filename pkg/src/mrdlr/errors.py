"""Exception hierarchy shared by every module.

The CLI maps :class:`ValidationError` to exit code 3 and :class:`NumericError`
to exit code 4.
"""


class MRDLRError(Exception):
    """Base class for toolkit errors."""


class ValidationError(MRDLRError, ValueError):
    """Invalid input, configuration, or file contents."""


class ChecksumError(ValidationError):
    """A stored file does not match the checksum recorded for it."""


class NumericError(MRDLRError, ArithmeticError):
    """A numerical procedure could not produce a meaningful result."""


class SingularSystemError(NumericError):
    """A per-voxel linear system was too ill-conditioned to solve."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
