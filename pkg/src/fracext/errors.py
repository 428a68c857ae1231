"""Exception types shared across the package."""


class FracExtError(Exception):
    """Base class for all package errors."""


class ConfigError(FracExtError, ValueError):
    """Unknown geometry, corpus family, malformed config file."""


class DomainError(FracExtError, ValueError):
    """A query point or object lies outside the domain an operation accepts."""


class ContractViolation(FracExtError, RuntimeError):
    """A postcondition or certified property does not hold."""
