"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, internal invariant violations exit 3.
"""


class LeafTileError(Exception):
    """Base class for all toolkit errors."""


class UsageError(LeafTileError):
    """Bad command-line arguments or configuration."""


class DataError(LeafTileError):
    """Invalid or inconsistent input data (annotations, sidecars, tables)."""


class InternalError(LeafTileError):
    """An internal invariant was violated; indicates a bug, not bad input."""
