"""Exception hierarchy.

Validation problems (bad input) derive from :class:`ValidationError`; numerical
failures (a solver that cannot deliver its contract) derive from
:class:`NumericalError`.  The CLI maps the two families to distinct exit codes.
"""


class DynamoError(Exception):
    pass


class ValidationError(DynamoError, ValueError):
    pass


class NumericalError(DynamoError, ArithmeticError):
    pass


class TorusMismatch(ValidationError):
    pass


class NonzeroMean(ValidationError):
    pass


class NonIntegerPeriod(ValidationError):
    pass


class NearSingular(NumericalError):
    """Truncated corrector system is close to singular (R_m near a bad value)."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class Diverging(NumericalError):
    pass


class CertificateFailed(NumericalError):
    pass


class GapUnreachable(NumericalError):
    pass


class OutsideCone(ValidationError):
    pass


class DegenerateAlpha(ValidationError):
    pass


class NoViableXi(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass


class SingularShift(NumericalError):
    pass


class BranchLoss(NumericalError):
    def __init__(self, message, epsilon=None):
        super().__init__(message)
        self.epsilon = epsilon


class NoUnstableBranch(NumericalError):
    pass


class CflViolation(UserWarning):
    pass


class NanDetected(NumericalError):
    pass


class HorizonExceeded(UserWarning):
    pass
