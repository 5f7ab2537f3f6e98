"""Exception hierarchy shared across the package.

Two error families matter to callers.  ``DataError`` covers problems with
the input data itself (malformed files, schema mismatches, values that fail
validation) and maps to exit code 2 in the command line tool.
``NumericError`` covers estimation failures on valid data (empty kernel
windows, singular designs, degenerate moments) and maps to exit code 3.
``UsageError`` is raised for command line misuse and maps to exit code 1.
"""

__all__ = [
    "DataError",
    "SchemaError",
    "ParseError",
    "ValidationError",
    "NumericError",
    "EmptyWindowError",
    "SingularDesignError",
    "DegenerateInputError",
    "BandwidthSearchError",
    "UsageError",
]


class DataError(Exception):
    """Problem with input data: malformed, missing, or failing validation."""


class SchemaError(DataError):
    """A required column is missing or the column layout is inconsistent."""


class ParseError(DataError):
    """A cell could not be parsed as a finite number."""


class ValidationError(DataError):
    """Structurally valid data violating a documented contract."""


class NumericError(Exception):
    """Estimation failed on valid data."""


class EmptyWindowError(NumericError):
    """No observation carries kernel weight at the requested point."""


class SingularDesignError(NumericError):
    """A design or moment matrix is singular beyond recovery."""


class DegenerateInputError(NumericError):
    """An input moment is outside the domain of a formula (for example a
    nonpositive variance or curvature estimate)."""


class BandwidthSearchError(NumericError):
    """Every candidate bandwidth in a search failed."""


class UsageError(Exception):
    """Command line misuse: bad flags, malformed config, unknown keys."""
