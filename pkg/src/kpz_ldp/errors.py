"""Exception types shared across the package."""


class KpzLdpError(Exception):
    """Base class for package errors."""


class DomainError(KpzLdpError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class ConfigurationError(KpzLdpError, ValueError):
    """Scheme or grid parameters cannot deliver a stable or resolved solve."""


class NumericalError(KpzLdpError, RuntimeError):
    """A root bracket, quadrature or iteration failed."""
