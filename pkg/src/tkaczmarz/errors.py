"""Exception hierarchy shared by the library and the CLI."""


class TKaczmarzError(Exception):
    """Base class for all library errors."""


class ShapeError(TKaczmarzError, ValueError):
    """Operand dimensions are incompatible."""


class ConfigError(TKaczmarzError, ValueError):
    """Invalid user configuration (block sizes, case ids, limits, ...)."""


class AssumptionViolation(TKaczmarzError, ArithmeticError):
    """A gram tensor that must be invertible is (numerically) singular.

    ``frequency`` is the 0-based DFT index along the third mode at which the
    conditioning test failed, when known.
    """

    def __init__(self, message, frequency=None, block=None):
        super().__init__(message)
        self.frequency = frequency
        self.block = block


class InternalConsistencyError(TKaczmarzError, RuntimeError):
    """A numerical self-check failed (e.g. imaginary residue after an inverse FFT)."""


class GenerationError(TKaczmarzError, RuntimeError):
    """A synthetic system could not be generated with the requested properties."""
