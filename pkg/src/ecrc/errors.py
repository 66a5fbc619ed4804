"""Exception hierarchy.

Each family maps onto one CLI exit code: usage problems exit 1, bad data
exits 2 and numerical/rank failures exit 3.
"""


class EcrcError(Exception):
    exit_code = 1


class InvalidArgumentError(EcrcError, ValueError):
    """An argument is outside its documented domain."""


class ShapeError(EcrcError, ValueError):
    """Array extents are incompatible with the operation."""


class DataError(EcrcError):
    exit_code = 2


class NumericError(EcrcError):
    exit_code = 3


class RankError(NumericError):
    """Requested dimension exceeds the numerical rank of the data."""

    def __init__(self, message, achievable_rank=None):
        super().__init__(message)
        self.achievable_rank = achievable_rank


class ModelFormatError(DataError):
    """Base class for model file load failures."""


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass
