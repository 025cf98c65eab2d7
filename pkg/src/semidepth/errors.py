"""Exception hierarchy shared across the package."""


class SemiDepthError(Exception):
    """Base class for all package errors."""


class SizeError(SemiDepthError, ValueError):
    """A field is too small for the requested operation."""


class ShapeError(SemiDepthError, ValueError):
    """Two fields that must agree in shape do not."""


class DomainError(SemiDepthError, ValueError):
    """A value lies outside the domain of an operation (e.g. negative disparity)."""


class FormatError(SemiDepthError, ValueError):
    """A file or byte buffer does not follow the expected layout."""


class RangeError(SemiDepthError, ValueError):
    """A value cannot be represented in the target encoding."""


class DegenerateInputError(SemiDepthError, ValueError):
    """Inputs leave a quantity undefined (empty masks, no valid pixels)."""


class NumericError(SemiDepthError, ArithmeticError):
    """Non-finite values appeared during optimization."""


class ProbeExhaustionError(SemiDepthError, RuntimeError):
    """Every finite-difference probe landed on a non-differentiable point."""


class ConfigError(SemiDepthError, ValueError):
    """An experiment configuration failed validation."""
