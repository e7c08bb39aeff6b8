"""Exception types shared across the package.

Two broad families: problems with a requested configuration (bad budget,
unknown architecture, infeasible synthetic spec) and problems with the data
itself (parse failures, schema mismatches, degenerate inputs). The CLI maps
them to distinct exit codes.
"""


class PPVerifyError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PPVerifyError):
    """The requested configuration is invalid or infeasible."""


class DataError(PPVerifyError):
    """The supplied data violates a precondition or cannot be parsed."""
