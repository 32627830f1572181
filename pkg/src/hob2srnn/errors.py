"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class InputError(ValueError):
    """An argument violates a precondition (empty series, bad level, ...)."""


class StateError(RuntimeError):
    """Operation called in an invalid state (backward before forward, untrained level)."""


class ParseError(ValueError):
    """A file does not conform to its documented grammar."""


class OracleError(RuntimeError):
    """The finite-difference oracle cannot be applied (non-deterministic loss)."""
