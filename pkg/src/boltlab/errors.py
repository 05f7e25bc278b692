"""Semantic exceptions shared across the package."""


class PrecisionError(ValueError):
    """A quadrature grid is too narrow for the requested accuracy."""


class WitnessDomainError(ValueError):
    """A witness value left the conjugate domain (f* would be +inf)."""


class IdxFormatError(ValueError):
    """An IDX file violates the binary format contract."""


class ConfigError(ValueError):
    """A run configuration is invalid or references missing files."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""
