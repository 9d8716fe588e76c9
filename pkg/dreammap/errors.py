"""Dreammap errors module. Provides the exception hierarchy shared by all modules."""


class DreammapError(Exception):
    """Base class of all dreammap errors."""


class ConfigError(DreammapError, ValueError):
    """Raised for invalid configuration values."""


class DataError(DreammapError, ValueError):
    """Raised for malformed or inconsistent maps, pairs, files and measurement sequences."""


class NumericalError(DreammapError, ArithmeticError):
    """Raised when a numerical procedure fails (factorisation, divergence)."""


class UsageError(DreammapError):
    """Raised for invalid command line usage."""
