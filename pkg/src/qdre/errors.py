"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (config 2, data 3, numerics 4),
so library code should prefer them over bare ValueError wherever a failure
originates from user-supplied configuration or data.
"""


class QdreError(Exception):
    """Base class for all package errors."""


class ConfigError(QdreError):
    """Invalid configuration: bad spec files, bad flag values, bad schemas."""


class DataError(QdreError):
    """Invalid or inconsistent data: malformed rows, dimension mismatches,
    degenerate partitions, unbalanced classes."""


class NumericsError(QdreError):
    """Numerical failure: non-finite risks or ratios, division guards."""
