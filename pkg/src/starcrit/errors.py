"""Exception hierarchy shared by all modules."""


class StarcritError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(StarcritError, ValueError):
    """Invalid user input (parameters, configuration, preconditions)."""


class StructuralError(StarcritError):
    """A computed object does not have the structure the construction guarantees.

    Usually a sign that the perturbation size is too large for the chosen
    separation points, or that a sampling density is too coarse.
    """


class DomainError(StarcritError, ValueError):
    """A point or parameter lies outside the region where a map is defined."""


class NonConvergenceError(StarcritError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class HypothesisError(StarcritError, ValueError):
    """A structural hypothesis on the nonlinearity is violated."""


class ResolutionError(StarcritError):
    """A grid is too coarse to resolve the domain."""
