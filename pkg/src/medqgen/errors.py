"""Exception types shared across the package."""


class MedqgenError(Exception):
    """Base class for package errors."""


class ShapeError(MedqgenError, ValueError):
    """Tensor/layer dimension mismatch."""


class NumericError(MedqgenError, ArithmeticError):
    """Non-finite value produced where finiteness is required."""


class DataError(MedqgenError, RuntimeError):
    """Missing or malformed input data."""


class ConfigError(MedqgenError, ValueError):
    """Invalid configuration values or schema."""
