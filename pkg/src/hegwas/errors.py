"""Exception hierarchy for the hegwas package."""


class HegwasError(Exception):
    """Base class for all package errors."""


class ParameterError(HegwasError):
    """Invalid scheme parameters or malformed arguments."""


class InputError(HegwasError):
    """Malformed user input (CSV files, configs, preconditions)."""


class BudgetDepletedError(HegwasError):
    """The ciphertext noise budget cannot support the requested operation."""


class AlignmentError(HegwasError):
    """Operands disagree on level or scale and must be aligned first."""


class MissingKeyError(HegwasError):
    """A required evaluation, rotation or conjugation key is absent."""


class DimensionError(HegwasError):
    """Encrypted-matrix dimensions are inconsistent."""


class SerializationError(HegwasError):
    """Corrupt or incompatible serialized material."""


class CacheError(HegwasError):
    """Ciphertext cache misuse (unknown handle, bad configuration)."""


class CacheCorruptionError(CacheError):
    """A spill file failed its checksum on read."""
