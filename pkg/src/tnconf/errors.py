"""Exception hierarchy shared by all modules."""


class TnError(Exception):
    """Base class for every error raised by this package."""


class InputError(TnError, ValueError):
    """Malformed input: wrong shapes, non-finite entries, bad parameters."""


class FluxDomainError(InputError):
    """A state lies outside the domain of validity of a flux."""


class PreconditionError(TnError):
    """An operation was called on data violating its documented precondition."""


class StructureError(TnError):
    """A configuration does not have the structure an operation requires."""


class AmbiguousSignError(StructureError):
    """A leg is too small (or indefinite) to be classified as PSD or NSD."""


class GenerationError(TnError, RuntimeError):
    def __init__(self, message, seed=None):
        super().__init__(message if seed is None else f"{message} (seed={seed})")
        self.seed = seed


class ConsistencyError(TnError, ArithmeticError):
    """Two formulas that must agree in exact arithmetic disagree numerically."""
