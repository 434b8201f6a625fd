"""Exception hierarchy shared by all modules."""


class SpecflowError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(SpecflowError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(SpecflowError, ValueError):
    """A function was evaluated outside the set where it is defined."""


class NotTraceClassError(SpecflowError):
    """A trace was requested for an operator with nonzero essential part."""


class NoCalkinModelError(SpecflowError):
    """Essential data requested for an operator without framing."""


class InvalidPairError(SpecflowError, ValueError):
    """Two operators (or paths) that must share framing do not."""


class InvalidKernelError(SpecflowError, ValueError):
    """A double operator integral kernel lacks a required symmetry."""


class InvalidWeightError(SpecflowError, ValueError):
    """Weight parameters are out of range."""


class HypothesisViolationError(SpecflowError):
    """A hypothesis of the integral formula (e.g. weight support) fails for the input."""


class QuadratureError(SpecflowError):
    """Adaptive quadrature did not reach the requested tolerance.

    ``best`` carries the best available :class:`~specflow.quadrature.QuadResult`.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PathTooWildError(SpecflowError):
    """Partition refinement hit its point cap."""


class DegenerateCrossingError(SpecflowError):
    """Crossing tally disagrees with the endpoint count; refine the grid."""


class ModelViolationError(SpecflowError):
    """A relative index is not (close to) an integer in the framed model."""


class GeneratorError(SpecflowError):
    """Random path generation failed after the allowed number of retries."""
