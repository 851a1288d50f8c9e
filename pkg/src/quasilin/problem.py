"""Problem data: ``A X + X B + sum_i f_i(X) C_i = D`` and the functional tags."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence, Union

import numpy as np

from .errors import DimensionMismatch
from .matcore import HSpec, Identity, as_mat, trace_functional

if TYPE_CHECKING:
    from .scalarnl import ScalarFn


class PsiKind(enum.Enum):
    """Matrix function inside ``f(X) = trace(psi(X))``."""

    EXP_NEG = "exp_neg"
    SQRT = "sqrt"


@dataclass(frozen=True)
class LinearTrace:
    """``f(X) = trace(H X)``."""

    h: HSpec = field(default_factory=Identity)

    def __call__(self, X) -> float:
        return trace_functional(self.h, X)


@dataclass(frozen=True)
class PowerTrace:
    """``f(X) = trace(X^p)``."""

    p: int

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise ValueError("power must be an integer >= 2")

    def __call__(self, X):
        return np.trace(np.linalg.matrix_power(X, self.p))


@dataclass(frozen=True)
class InverseTrace:
    """``f(X) = trace(X^{-1})``."""

    def __call__(self, X):
        return np.trace(np.linalg.inv(X))


@dataclass(frozen=True)
class FrobeniusSq:
    """``f(X) = ||X||_F^2 = trace(X^T X)``."""

    def __call__(self, X):
        return np.trace(X.T @ X)


@dataclass(frozen=True)
class TracePsi:
    """``f(X) = trace(psi(X))`` for a matrix function ``psi``."""

    psi: PsiKind

    def __call__(self, X) -> float:
        from .fixpoint import evaluate_f

        return evaluate_f(self.psi, X)


@dataclass(frozen=True)
class GOfTrace:
    """``f(X) = g(h(X))`` with ``h`` linear and ``g`` scalar."""

    g: "ScalarFn"
    h: HSpec = field(default_factory=Identity)

    def __call__(self, X) -> float:
        return self.g.value(trace_functional(self.h, X))


FunctionalSpec = Union[LinearTrace, PowerTrace, InverseTrace, FrobeniusSq, TracePsi, GOfTrace]


@dataclass(frozen=True)
class QuasiLinearProblem:
    """``A X + X B + sum_i f_i(X) C_i = D`` with ``X`` of size ``n x m``."""

    A: np.ndarray
    B: np.ndarray
    terms: tuple
    D: np.ndarray

    def __init__(self, A, B, terms: Sequence[tuple[Any, Any]], D):
        A = as_mat(A, "A")
        B = as_mat(B, "B")
        D = as_mat(D, "D")
        n, m = A.shape[0], B.shape[0]
        if A.shape != (n, n) or B.shape != (m, m):
            raise DimensionMismatch("A and B must be square")
        if D.shape != (n, m):
            raise DimensionMismatch(f"D must be {n}x{m}, got {D.shape}")
        checked = []
        for i, (C, f) in enumerate(terms):
            C = as_mat(C, f"C[{i}]")
            if C.shape != (n, m):
                raise DimensionMismatch(f"C[{i}] must be {n}x{m}, got {C.shape}")
            if not isinstance(f, LinearTrace) and n != m:
                raise DimensionMismatch("nonlinear functionals require a square unknown")
            checked.append((C, f))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "terms", tuple(checked))
        object.__setattr__(self, "D", D)

    @property
    def shape(self) -> tuple[int, int]:
        return self.D.shape

    @property
    def is_linear(self) -> bool:
        return all(isinstance(f, LinearTrace) for _, f in self.terms)

    def residual(self, X) -> np.ndarray:
        R = self.A @ X + X @ self.B - self.D
        for C, f in self.terms:
            R = R + f(X) * C
        return R

    def relative_residual(self, X) -> float:
        """``||R||_F`` over the sum of the norms of all terms."""
        X = np.asarray(X)
        scale = (np.linalg.norm(self.A) + np.linalg.norm(self.B)) * np.linalg.norm(X)
        scale += np.linalg.norm(self.D)
        for C, f in self.terms:
            scale += abs(f(X)) * np.linalg.norm(C)
        R = np.linalg.norm(self.residual(X))
        return float(R / scale) if scale > 0 else float(R)

    def with_rhs(self, D) -> "QuasiLinearProblem":
        return QuasiLinearProblem(self.A, self.B, self.terms, D)
