"""Exception classes shared across qsentinel."""


class QSentinelError(Exception):
    """Base class for all qsentinel errors."""


class UsageError(QSentinelError, ValueError):
    """Bad arguments: invalid parameters, empty inputs, out-of-range options."""


class DataError(QSentinelError, ValueError):
    """Input data violates a model invariant (malformed rows, zero variance, ...)."""
