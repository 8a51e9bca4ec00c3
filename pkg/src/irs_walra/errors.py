"""Exception types raised across the package."""


class WalraError(Exception):
    """Base class for all package errors."""


class NonHermitianInput(WalraError, ValueError):
    pass


class BadLength(WalraError, ValueError):
    pass


class DimensionMismatch(WalraError, ValueError):
    pass


class InvalidProfile(WalraError, ValueError):
    pass


class PadError(WalraError, ValueError):
    pass


class SingularCore(WalraError, ArithmeticError):
    pass


class NonFiniteIterate(WalraError, ArithmeticError):
    pass


class EmptyConditionCell(WalraError, ValueError):
    """A (element, phase) cell received no samples in the measurement record."""


class ConfigError(WalraError, ValueError):
    pass
