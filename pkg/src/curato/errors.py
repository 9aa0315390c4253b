"""Exception hierarchy.

ValidationError covers bad inputs and malformed files (CLI exit code 1);
everything else raised by the library is a plain exception (exit code 2).
"""


class CuratoError(Exception):
    pass


class ValidationError(CuratoError, ValueError):
    pass


class BadMagicError(ValidationError):
    pass


class TruncatedFileError(ValidationError):
    pass


class NonFiniteValueError(ValidationError):
    pass


class LabelRangeError(ValidationError):
    pass


class EmptyDatasetError(ValidationError):
    pass


class CsvFormatError(ValidationError):
    pass


class HashMismatchError(ValidationError):
    pass


class EmptyFilterError(ValidationError):
    """Raised when a filter would remove every example."""
