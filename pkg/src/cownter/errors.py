"""Exception hierarchy used across the toolkit.

The CLI maps these onto exit codes: usage errors -> 1, DataError -> 2,
NumericError -> 3.
"""


class CownterError(Exception):
    """Base class for all toolkit errors."""


class DataError(CownterError):
    """Malformed or inconsistent input data (bad manifest, bad image, ...)."""


class FormatError(DataError):
    """A serialized artifact (model file, density dump) failed to parse."""


class NumericError(CownterError):
    """Non-finite values where finite ones are required (NaN loss, ...)."""
