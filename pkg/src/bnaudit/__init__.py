try:
    from ._version import version
except ImportError:  # pragma: no cover
    version = "0.0.0"

__version__ = version


class BnAuditBaseException(Exception):
    pass


class BnAuditInputError(BnAuditBaseException):
    """Invalid input: malformed files, unknown labels, inconsistent models."""


class BnAuditComputationError(BnAuditBaseException):
    """A computation hit a degeneracy (impossible evidence, degenerate row)."""
