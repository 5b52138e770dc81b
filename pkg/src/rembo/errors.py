"""Exception types raised across the package."""


class RemboError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(RemboError, ValueError):
    """Raised when the requested (D, d) pair is not a valid embedding shape."""


class DomainError(RemboError, ValueError):
    """Raised when a low-dimensional point lies outside the zonotope."""


class NoPreimageError(RemboError, ValueError):
    """Raised when a high-dimensional point has no pre-image by the clamp map."""


class ConditioningError(RemboError, ArithmeticError):
    """Raised when a covariance matrix stays singular after jitter escalation."""


class InvalidDataError(RemboError, ValueError):
    """Raised on non-finite observations."""


class RegistryError(RemboError, KeyError):
    """Raised for unknown benchmark function names."""


class ConfigError(RemboError, ValueError):
    """Raised for malformed experiment configuration files."""
