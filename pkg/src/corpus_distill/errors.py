"""Exception hierarchy shared across the package.

CLI exit-code mapping: usage errors exit 1, :class:`DataError` exits 2,
:class:`ResourceError` (and any other I/O or environment failure) exits 3.
"""


class CorpusDistillError(Exception):
    """Base class for all package errors."""


class DataError(CorpusDistillError):
    """Malformed or contradictory input data."""


class ResourceError(CorpusDistillError):
    """Missing files, unreachable services, or other environment failures."""
