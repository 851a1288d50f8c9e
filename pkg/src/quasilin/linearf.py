"""Closed-form solvers for linear functionals ``f(X) = trace(H X)``.

With ``M = L^{-1}(D)`` and ``N_i = -L^{-1}(C_i)`` for the Sylvester operator
``L: X -> AX + XB``, the unknown satisfies ``X = M + sum_i f_i(X) N_i``.
Applying each ``f_j`` gives the small system ``(I - F) sigma = f`` with
``F[j, i] = f_j(N_i)`` and ``f[j] = f_j(M)``.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    SingularA,
    SingularSmallSystem,
    ZeroDenominator,
)
from .matcore import as_mat, solve_sylvester
from .problem import LinearTrace, QuasiLinearProblem

__all__ = [
    "Outcome",
    "LinearOutcome",
    "reduce_problem",
    "solve_reduced",
    "solve_single",
    "solve_multi",
    "trace_shortcut",
    "error_from_residual",
]

# relative threshold on |1 - f(N)| (scaled by 1 + |f(N)|)
SING_RTOL = 1e-10


class Outcome(enum.Enum):
    UNIQUE = "unique"
    NON_UNIQUE = "nonunique"
    NO_SOLUTION = "nosolution"


@dataclass
class LinearOutcome:
    """Result of a linear-f solve.

    ``UNIQUE`` carries ``X`` and ``sigma`` (the values ``f_i(X)``).
    ``NON_UNIQUE`` carries the affine family ``X(t) = M + sum_k t_k N_list[k]``;
    ``M`` is then already shifted by a particular solution of the small system.
    ``NO_SOLUTION`` carries only diagnostics.
    """

    kind: Outcome
    M: np.ndarray
    N_list: list
    X: np.ndarray | None = None
    sigma: np.ndarray | None = None
    F: np.ndarray | None = None
    rhs: np.ndarray | None = None
    residual: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def unique(self) -> bool:
        return self.kind is Outcome.UNIQUE

    def member(self, t: Sequence[float]) -> np.ndarray:
        """One member of a non-unique family."""
        if self.kind is not Outcome.NON_UNIQUE:
            raise ValueError("member() is only defined for a non-unique family")
        t = np.atleast_1d(np.asarray(t, dtype=float))
        X = self.M.copy()
        for tk, Nk in zip(t, self.N_list):
            X += tk * Nk
        return X


def reduce_problem(problem: QuasiLinearProblem) -> tuple[np.ndarray, list]:
    """Return ``M = L^{-1}(D)`` and ``[N_i = -L^{-1}(C_i)]``."""
    M = solve_sylvester(problem.A, problem.B, problem.D)
    Ns = [-solve_sylvester(problem.A, problem.B, C) for C, _ in problem.terms]
    return M, Ns


def _require_linear(problem: QuasiLinearProblem) -> None:
    if not problem.is_linear:
        raise TypeError("linear solvers require LinearTrace functionals")


def solve_reduced(
    M: np.ndarray,
    Ns: Sequence[np.ndarray],
    fs: Sequence[Callable[[np.ndarray], float]],
) -> LinearOutcome:
    """Solve ``X = M + sum_i f_i(X) N_i`` for linear ``f_i``.

    Builds ``F`` column by column and solves ``(I - F) sigma = f``. When
    ``I - F`` is numerically singular, the rank of the augmented system
    decides between an affine family of solutions and no solution.
    """
    ell = len(Ns)
    if len(fs) != ell:
        raise DimensionMismatch("one functional per N_i is required")
    M = np.asarray(M, dtype=float)
    if ell == 0:
        return LinearOutcome(
            Outcome.UNIQUE, M=M, N_list=[], X=M.copy(), sigma=np.zeros(0),
            F=np.zeros((0, 0)), rhs=np.zeros(0), residual=0.0,
        )

    F = np.array([[fj(Ni) for Ni in Ns] for fj in fs], dtype=float)
    rhs = np.array([fj(M) for fj in fs], dtype=float)
    K = np.eye(ell) - F
    F_norm1 = float(np.linalg.norm(F, 1))
    diagnostics = {"F_norm1": F_norm1, "F_norm_lt_1": F_norm1 < 1.0}

    eps = SING_RTOL * (1.0 + float(np.linalg.norm(F, 2)))
    svals = np.linalg.svd(K, compute_uv=False)
    diagnostics["smin_I_minus_F"] = float(svals[-1])

    if svals[-1] > eps:
        sigma = np.linalg.solve(K, rhs)
        X = M + sum(s * Ni for s, Ni in zip(sigma, Ns))
        sig_check = np.array([fj(X) for fj in fs])
        residual = float(np.linalg.norm(sig_check - sigma) / (1.0 + np.linalg.norm(sigma)))
        return LinearOutcome(
            Outcome.UNIQUE, M=M, N_list=list(Ns), X=X, sigma=sigma,
            F=F, rhs=rhs, residual=residual, diagnostics=diagnostics,
        )

    # singular: consistent iff rhs lies in range(I - F)
    U, s, Vt = np.linalg.svd(K)
    rank = int(np.sum(s > eps))
    sigma_p = Vt[:rank].T @ ((U[:, :rank].T @ rhs) / s[:rank])
    inconsistency = float(np.linalg.norm(K @ sigma_p - rhs))
    scale = max(float(np.linalg.norm(M)), np.finfo(float).tiny)
    diagnostics.update(rank=rank, inconsistency=inconsistency)
    if inconsistency > eps * scale:
        return LinearOutcome(
            Outcome.NO_SOLUTION, M=M, N_list=list(Ns), F=F, rhs=rhs,
            residual=inconsistency, diagnostics=diagnostics,
        )
    Z = Vt[rank:].T
    M_p = M + sum(s_i * Ni for s_i, Ni in zip(sigma_p, Ns))
    family = [sum(Z[i, k] * Ns[i] for i in range(ell)) for k in range(Z.shape[1])]
    return LinearOutcome(
        Outcome.NON_UNIQUE, M=M_p, N_list=family, sigma=sigma_p, F=F, rhs=rhs,
        residual=inconsistency, diagnostics=diagnostics,
    )


def solve_single(problem: QuasiLinearProblem) -> LinearOutcome:
    """Closed form for a single linear term.

    ``X = M + sigma N`` with ``sigma = f(M) / (1 - f(N))``. If ``1 - f(N)``
    vanishes the outcome is a one-parameter family when ``f(M) = 0`` and
    no solution otherwise.
    """
    _require_linear(problem)
    if len(problem.terms) != 1:
        raise ValueError("solve_single expects exactly one term")
    (C, f), = problem.terms
    M = solve_sylvester(problem.A, problem.B, problem.D)
    N = -solve_sylvester(problem.A, problem.B, C)
    fM, fN = float(f(M)), float(f(N))
    denom = 1.0 - fN
    eps = SING_RTOL * (1.0 + abs(fN))
    diagnostics = {"f_M": fM, "f_N": fN}

    if abs(denom) <= eps:
        if abs(fM) <= eps * np.linalg.norm(M):
            return LinearOutcome(
                Outcome.NON_UNIQUE, M=M, N_list=[N], sigma=np.zeros(1),
                F=np.array([[fN]]), rhs=np.array([fM]), residual=abs(fM),
                diagnostics=diagnostics,
            )
        return LinearOutcome(
            Outcome.NO_SOLUTION, M=M, N_list=[N], F=np.array([[fN]]),
            rhs=np.array([fM]), residual=abs(fM), diagnostics=diagnostics,
        )

    sigma = fM / denom
    X = M + sigma * N
    return LinearOutcome(
        Outcome.UNIQUE, M=M, N_list=[N], X=X, sigma=np.array([sigma]),
        F=np.array([[fN]]), rhs=np.array([fM]),
        residual=problem.relative_residual(X), diagnostics=diagnostics,
    )


def solve_multi(problem: QuasiLinearProblem) -> LinearOutcome:
    """Solve with ``ell`` linear terms through the ``ell x ell`` system."""
    _require_linear(problem)
    n, m = problem.shape
    if len(problem.terms) > n * m:
        raise ValueError("more terms than unknowns")
    M, Ns = reduce_problem(problem)
    out = solve_reduced(M, Ns, [f for _, f in problem.terms])
    if out.kind is Outcome.UNIQUE:
        out.residual = problem.relative_residual(out.X)
    return out


def trace_shortcut(A, D, C=None, *, C_factors=None) -> float:
    """``trace(X)`` for ``A X + X A + trace(X) C = D`` without any Sylvester solve.

    Uses ``trace(X) = trace(A^{-1} D) / (2 + trace(A^{-1} C))``. With
    ``C_factors=(C1, C2)`` for ``C = C1 C2^T`` of rank ``k``, only ``k``
    systems with ``A`` are solved for the denominator.
    """
    A = as_mat(A, "A")
    D = as_mat(D, "D")
    n = A.shape[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A)
    if np.abs(np.diag(lu)).min() <= 8 * n * np.finfo(float).eps * np.linalg.norm(A, 1):
        raise SingularA("A is numerically singular")

    num = np.trace(sla.lu_solve((lu, piv), D))
    if C_factors is not None:
        C1, C2 = (as_mat(c) for c in C_factors)
        tr_c = np.trace(C2.T @ sla.lu_solve((lu, piv), C1))
    elif C is not None:
        tr_c = np.trace(sla.lu_solve((lu, piv), as_mat(C, "C")))
    else:
        tr_c = 0.0
    den = 2.0 + tr_c
    if abs(den) <= 1e-13 * (2.0 + abs(tr_c)):
        raise ZeroDenominator("2 + trace(A^{-1} C) vanishes")
    return float(num / den)


def error_from_residual(problem: QuasiLinearProblem, X_approx) -> tuple[np.ndarray, np.ndarray]:
    """Residual ``R`` of ``X_approx`` and the exact error ``E = X_approx - X*``.

    ``E`` solves ``A E + E B + f(E) C = R``, i.e. ``E = L^{-1}(R) + f(E) N``.
    """
    X_approx = as_mat(X_approx, "X_approx")
    R = problem.residual(X_approx)
    out = solve_single(problem.with_rhs(R))
    if out.kind is not Outcome.UNIQUE:
        raise SingularSmallSystem(f"error equation has {out.kind.value} outcome")
    return R, out.X
