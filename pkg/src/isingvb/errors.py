"""Exception types shared across the package.

Each maps to one failure class: bad arguments, infeasible generation,
inputs too large for exact methods, evaluation outside a function's
domain, and optimizer non-convergence.
"""


class ParameterError(ValueError):
    """Arguments violate a precondition (dimensions, ranges, feasibility)."""


class GenerationError(RuntimeError):
    """Randomized construction exhausted its retry budget."""


class CapacityError(ValueError):
    """Problem size exceeds what an exact (enumeration) method supports."""


class DomainError(ValueError):
    """Evaluation requested outside a function's mathematical domain."""


class ConvergenceError(RuntimeError):
    """Iterative solver failed to converge; carries the last iterate."""

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate
