"""Exception hierarchy shared by all solvers."""


class QuasiLinError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(QuasiLinError, ValueError):
    pass


class InputError(QuasiLinError, ValueError):
    """Malformed input data (non-finite entries, bad problem files)."""


class SingularOperator(QuasiLinError):
    """The Sylvester operator X -> AX + XB (or its vectorized form) is singular."""


class SingularA(QuasiLinError):
    pass


class SingularM(QuasiLinError):
    pass


class SingularN(QuasiLinError):
    pass


class SingularSmallSystem(QuasiLinError):
    """The small coefficient system (I - F) sigma = f has no unique solution."""


class ZeroDenominator(QuasiLinError):
    pass


class NumericalOverflow(QuasiLinError, ArithmeticError):
    pass


class NotSPD(QuasiLinError):
    pass


class NotDiagonalizable(QuasiLinError):
    pass


class DegenerateCase(QuasiLinError):
    pass


class NoRealSolution(QuasiLinError):
    pass


class TooFewIterations(QuasiLinError):
    pass


class DerivativeVanishes(QuasiLinError):
    pass


class NoConvergence(QuasiLinError):
    pass


class DomainExit(QuasiLinError):
    pass


class VerificationFailed(QuasiLinError):
    pass


class InvalidElasticity(QuasiLinError, ValueError):
    pass


class StepFailure(QuasiLinError):
    pass
