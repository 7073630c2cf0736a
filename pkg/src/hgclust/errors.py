"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: UsageError -> 1, DataError -> 2,
NumericsError -> 3.
"""


class HgclustError(Exception):
    """Base class for package errors."""


class UsageError(HgclustError):
    """Bad CLI arguments or malformed configuration."""


class DataError(HgclustError):
    """Malformed or inconsistent input data."""


class NumericsError(HgclustError):
    """Numerical failure: NaN/Inf, divergence, failed gradient check."""
