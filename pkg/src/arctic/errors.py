"""Exception types shared across the package.

Each class carries an ``exit_code`` used by the command line front end:
1 for usage problems, 2 for infeasible inputs, 3 for capacity limits.
"""


class ArcticError(Exception):
    exit_code = 1


class InvalidArgument(ArcticError, ValueError):
    exit_code = 1


class ScaleMismatch(InvalidArgument):
    """A scaled polygon vertex is not an integer lattice point."""


class DomainError(InvalidArgument):
    """A slope or argument lies outside the set where a function is defined."""


class RangeError(InvalidArgument):
    """An argument lies outside the supported numerical range."""


class SingularError(InvalidArgument):
    pass


class PreconditionError(InvalidArgument):
    pass


class TangencyError(InvalidArgument):
    """Curvature parameters requested at a tangency location."""


class Untileable(ArcticError):
    exit_code = 2


class InfeasibleError(ArcticError):
    exit_code = 2


class ValidationError(ArcticError):
    exit_code = 2

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class NotFound(ArcticError):
    exit_code = 2


class InsufficientData(ArcticError):
    exit_code = 2


class ConvergenceError(ArcticError):
    exit_code = 2

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class CapacityError(ArcticError):
    exit_code = 3
