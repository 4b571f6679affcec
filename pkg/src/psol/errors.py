"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError (and
subclasses) -> 2, anything else -> 3.
"""


class PsolError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PsolError):
    """Bad or inconsistent run configuration (missing paths, unknown keys)."""


class DataError(PsolError):
    """Problem with input data: missing records, unresolvable ids, bad values."""


class FormatError(DataError):
    """A file does not conform to its declared on-disk format."""


class ValidationError(DataError):
    """A well-formed value violates a domain invariant."""


class TruncationError(FormatError):
    """A binary file ended mid-record.

    ``record_index`` is the zero-based index of the record being decoded
    when the file ran out of bytes (None if the header itself was short).
    """

    def __init__(self, message: str, record_index: int | None = None):
        super().__init__(message)
        self.record_index = record_index
