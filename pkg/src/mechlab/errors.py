"""Exception hierarchy shared by all mechlab modules."""


class MechlabError(Exception):
    """Base class for every error raised by mechlab."""


class ShapeError(MechlabError, ValueError):
    """Array operands have incompatible or invalid shapes."""


class GroupError(MechlabError, ValueError):
    """Invalid group modulus or element."""


class InvalidModelError(MechlabError, ValueError):
    """A model violates one of its invariants.

    ``failures`` lists every invariant that did not hold.
    """

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


class NotInvertibleError(MechlabError, ValueError):
    """A kernel (or diagonal factor) has a vanishing spectral coefficient."""


class NotInSolutionSetError(MechlabError, ValueError):
    """Two models do not produce the same observational distribution."""


class DegenerateError(MechlabError, ValueError):
    """A ratio or statistic has a zero denominator."""


class DivergenceError(MechlabError, ArithmeticError):
    """An optimizer produced a non-finite state."""

    def __init__(self, message, iteration=None, trajectory=None):
        super().__init__(message)
        self.iteration = iteration
        self.trajectory = trajectory


class PositivityError(DivergenceError):
    """A positive-constrained factor crossed zero during a run."""


class ConfigError(MechlabError, ValueError):
    """Invalid experiment configuration."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
