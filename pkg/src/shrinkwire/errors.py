"""Exception types shared across the package."""


class InputError(ValueError):
    """Argument out of range, wrong shape, or non-finite."""


class PreconditionError(InputError):
    """Input violates a structural precondition (e.g. asymmetric matrix)."""


class DegenerateDegreeError(InputError):
    """A vertex has zero degree where normalization needs a positive one."""


class UnsupportedError(InputError):
    """Operation does not support this kind of input (e.g. directed graph)."""


class FormatError(InputError):
    """Malformed or inconsistent text file."""


class DivergenceError(RuntimeError):
    """An iteration blew up (non-finite loss, unbounded state)."""
