"""Exception hierarchy.

Every error carries the CLI exit code it maps to: input/precondition
problems exit with 2, numerical failures with 3.
"""


class ProjflatError(Exception):
    exit_code = 3


class ValidationError(ProjflatError, ValueError):
    exit_code = 2


class NumericalError(ProjflatError, ArithmeticError):
    exit_code = 3


class RandersType(ValidationError):
    pass


class DenominatorVanishes(ValidationError):
    pass


class NotRegularAtZero(ValidationError):
    pass


class OutOfRegularRange(ValidationError):
    pass


class TargetOutOfRange(ValidationError):
    pass


class NonPositiveResult(ValidationError):
    pass


class DegenerateField(ValidationError):
    pass


class OutsideDomain(ValidationError):
    pass


class EmptyDomain(ValidationError):
    pass


class RegularityViolated(ValidationError):
    pass


class GaugeMismatch(ValidationError):
    """Raised when a delta tagged with one gauge is fed to a formula of another."""


class NonConvergence(NumericalError):
    pass


class SolutionLeavesAdmissibleRegion(NumericalError):
    pass


class RouteDisagreement(NumericalError):
    pass


class ChartExit(NumericalError):
    pass
