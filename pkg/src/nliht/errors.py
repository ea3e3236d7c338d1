"""Exception types shared across the package."""


class InvalidInput(ValueError):
    """Malformed arguments: wrong shapes, out-of-range constants, bad sets."""


class DomainViolation(ValueError):
    """A point left the domain box on which a nonlinearity's bound holds."""


class InfeasibleStep(ValueError):
    """No step size satisfies the requested admissibility condition."""


class Diverged(RuntimeError):
    """An iteration produced non-finite values.

    Attributes
    ----------
    iteration : int
        Index of the iteration that produced the non-finite value.
    last_finite : numpy.ndarray
        The last iterate whose entries were all finite.
    """

    def __init__(self, message, iteration, last_finite):
        super().__init__(message)
        self.iteration = iteration
        self.last_finite = last_finite
