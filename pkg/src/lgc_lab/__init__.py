"""Numerical laboratory for the non-resonant Carleson-Radon transform along monomial curves."""

__version__ = "0.1.0"


class DomainError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


class AccuracyError(RuntimeError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ConfigError(ValueError):
    pass


class ResourceError(MemoryError):
    pass
