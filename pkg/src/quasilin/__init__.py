"""Solvers for quasi-linear matrix equations ``A X + X B + f(X) C = D``."""
from .errors import QuasiLinError
from .matcore import Dense, Identity, RankOne, solve_sylvester
from .problem import (
    FrobeniusSq,
    GOfTrace,
    InverseTrace,
    LinearTrace,
    PowerTrace,
    PsiKind,
    QuasiLinearProblem,
    TracePsi,
)

__version__ = "0.1.0"

__all__ = [
    "QuasiLinError",
    "Dense",
    "Identity",
    "RankOne",
    "solve_sylvester",
    "FrobeniusSq",
    "GOfTrace",
    "InverseTrace",
    "LinearTrace",
    "PowerTrace",
    "PsiKind",
    "QuasiLinearProblem",
    "TracePsi",
]
