"""Dense numerical kernels.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 (complex only
where a solution or root is complex). Every public routine is a pure
function of its arguments.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionMismatch,
    InputError,
    NotDiagonalizable,
    NotSPD,
    NumericalOverflow,
    SingularOperator,
)

__all__ = [
    "as_mat",
    "as_vec",
    "solve_sylvester",
    "sylvester_residual",
    "kron_solve",
    "smw_solve",
    "vec",
    "unvec",
    "mat_exp",
    "mat_sqrt",
    "is_spd",
    "Identity",
    "RankOne",
    "Dense",
    "HSpec",
    "trace_functional",
    "functional_matrix",
    "EigResult",
    "eig_general",
    "companion_roots",
]

_EPS = np.finfo(float).eps

# Oracle scale cap for the vectorized dense solve.
KRON_MAX_UNKNOWNS = 400


def as_mat(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array (scalars become 1x1)."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def as_vec(a, name: str = "vector") -> np.ndarray:
    arr = np.asarray(a, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def _square(a: np.ndarray, name: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {a.shape}")


def vec(X: np.ndarray) -> np.ndarray:
    """Stack the columns of ``X`` into one long vector."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(x: np.ndarray, n: int, m: int) -> np.ndarray:
    return np.asarray(x).reshape((n, m), order="F")


# --------------------------------------------------------------------------
# Sylvester equation
# --------------------------------------------------------------------------

def _shifted_solve(T: np.ndarray, shifts: np.ndarray, rhs: np.ndarray, scale: float) -> np.ndarray:
    """Solve ``T Y + Y S_jj = rhs`` for a 1x1 or 2x2 diagonal block ``S_jj``."""
    n = T.shape[0]
    k = shifts.shape[0]
    if k == 1:
        K = T + shifts[0, 0] * np.eye(n)
    else:
        # column-stacked form of T Y + Y S_jj for a two-column block
        K = np.kron(np.eye(2), T) + np.kron(shifts.T, np.eye(n))
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularOperator
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(K, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= 8 * n * _EPS * scale:
        raise SingularOperator(
            "A and -B share an eigenvalue (numerically); Sylvester operator is singular"
        )
    y = sla.lu_solve((lu, piv), vec(rhs), check_finite=False)
    return unvec(y, n, k)


def solve_sylvester(A, B, D) -> np.ndarray:
    """Solve ``A X + X B = D`` by the Bartels-Stewart method.

    Both coefficients are reduced to real Schur form, ``A = U T U^T`` and
    ``B = V S V^T``. The transformed equation ``T Y + Y S = U^T D V`` is
    solved by forward substitution over the 1x1 and 2x2 diagonal blocks of
    the quasi-triangular ``S``; each block step is a shifted linear solve
    with ``T``. Finally ``X = U Y V^T``.

    Raises
    ------
    SingularOperator
        If a block system is numerically singular, i.e. ``A`` and ``-B``
        (nearly) share an eigenvalue.
    """
    A = as_mat(A, "A")
    B = as_mat(B, "B")
    D = as_mat(D, "D")
    _square(A, "A")
    _square(B, "B")
    n, m = A.shape[0], B.shape[0]
    if D.shape != (n, m):
        raise DimensionMismatch(f"D must be {n}x{m}, got {D.shape}")

    T, U = sla.schur(A, output="real")
    S, V = sla.schur(B, output="real")
    F = U.T @ D @ V
    Y = np.zeros((n, m))
    scale = np.linalg.norm(T, 1) + np.linalg.norm(S, 1)
    if scale == 0.0:
        raise SingularOperator("A and B are both zero")

    j = 0
    while j < m:
        # a nonzero subdiagonal entry marks a 2x2 complex-pair block
        k = 2 if j + 1 < m and S[j + 1, j] != 0.0 else 1
        cols = slice(j, j + k)
        rhs = F[:, cols] - Y[:, :j] @ S[:j, cols]
        Y[:, cols] = _shifted_solve(T, S[cols, cols], rhs, scale)
        j += k

    return U @ Y @ V.T


def sylvester_residual(A, B, X, D) -> float:
    """Relative residual ``||AX + XB - D||_F / ((||A||_F + ||B||_F) ||X||_F + ||D||_F)``."""
    R = A @ X + X @ B - D
    denom = (np.linalg.norm(A) + np.linalg.norm(B)) * np.linalg.norm(X) + np.linalg.norm(D)
    return float(np.linalg.norm(R) / denom) if denom > 0 else float(np.linalg.norm(R))


# --------------------------------------------------------------------------
# Linear functionals X -> trace(H X)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Identity:
    """``f(X) = trace(X)``."""


@dataclass(frozen=True)
class RankOne:
    """``f(X) = v^T X u``, i.e. ``H = u v^T``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u", as_vec(self.u, "u"))
        object.__setattr__(self, "v", as_vec(self.v, "v"))


@dataclass(frozen=True)
class Dense:
    """``f(X) = trace(H X)`` with an explicit ``H``."""

    H: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "H", as_mat(self.H, "H"))


HSpec = Union[Identity, RankOne, Dense]


def trace_functional(h: HSpec, X) -> float:
    """Evaluate ``trace(H X)``; the rank-one case never forms ``H``."""
    X = np.asarray(X)
    n, m = X.shape
    if isinstance(h, Identity):
        if n != m:
            raise DimensionMismatch("trace requires a square argument")
        return np.trace(X)
    if isinstance(h, RankOne):
        if h.u.shape[0] != m or h.v.shape[0] != n:
            raise DimensionMismatch(
                f"rank-one functional expects u in R^{m}, v in R^{n}; "
                f"got {h.u.shape[0]}, {h.v.shape[0]}"
            )
        return h.v @ X @ h.u
    if isinstance(h, Dense):
        if h.H.shape != (m, n):
            raise DimensionMismatch(f"H must be {m}x{n}, got {h.H.shape}")
        # trace(H X) without the full product
        return np.sum(h.H.T * X)
    raise TypeError(f"unknown functional spec {h!r}")


def functional_matrix(h: HSpec, n: int, m: int) -> np.ndarray:
    """Explicit ``H`` (``m x n``) such that the functional is ``trace(H X)``."""
    if isinstance(h, Identity):
        if n != m:
            raise DimensionMismatch("trace requires a square argument")
        return np.eye(n)
    if isinstance(h, RankOne):
        return np.outer(h.u, h.v)
    return h.H


# --------------------------------------------------------------------------
# Vectorized oracles
# --------------------------------------------------------------------------

def _kron_operator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n, m = A.shape[0], B.shape[0]
    return np.kron(np.eye(m), A) + np.kron(B.T, np.eye(n))


def _check_oracle_scale(n: int, m: int) -> None:
    if n * m > KRON_MAX_UNKNOWNS:
        raise DimensionMismatch(
            f"vectorized oracle limited to n*m <= {KRON_MAX_UNKNOWNS}, got {n * m}"
        )


def _dense_solve(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if np.linalg.cond(G) > 1.0 / (100 * _EPS):
        raise SingularOperator("vectorized operator is numerically singular")
    return np.linalg.solve(G, rhs)


def kron_solve(problem) -> np.ndarray:
    """Solve a problem with linear functionals through its ``nm x nm`` vectorization.

    Each term ``trace(H_i X) C_i`` contributes the rank-one block
    ``vec(C_i) vec(H_i^T)^T`` to ``I (x) A + B^T (x) I``. Used as a
    ground-truth oracle for small sizes only.
    """
    A, B, D = problem.A, problem.B, problem.D
    n, m = A.shape[0], B.shape[0]
    _check_oracle_scale(n, m)
    G = _kron_operator(A, B)
    for C, f in problem.terms:
        h = getattr(f, "h", None)
        if h is None:
            raise TypeError("kron_solve handles linear functionals only")
        H = functional_matrix(h, n, m)
        G = G + np.outer(vec(C), vec(H.T))
    return unvec(_dense_solve(G, vec(D)), n, m)


def smw_solve(A, B, U, V, D) -> tuple[np.ndarray, float]:
    """Solve ``(G + V U^T) x = vec(D)`` with the Sherman-Morrison formula.

    ``G = I (x) A + B^T (x) I`` is factored densely; ``U`` and ``V`` are
    vectors of length ``nm``. Returns the solution matrix and the scalar
    ``sigma = (1 + U^T G^{-1} V)^{-1} U^T G^{-1} d`` that multiplies
    ``G^{-1} V`` in the update.
    """
    A = as_mat(A, "A")
    B = as_mat(B, "B")
    D = as_mat(D, "D")
    n, m = A.shape[0], B.shape[0]
    _check_oracle_scale(n, m)
    U = as_vec(U, "U")
    V = as_vec(V, "V")
    G = _kron_operator(A, B)
    if np.linalg.cond(G) > 1.0 / (100 * _EPS):
        raise SingularOperator("vectorized operator is numerically singular")
    lu = sla.lu_factor(G)
    Gd = sla.lu_solve(lu, vec(D))
    Gv = sla.lu_solve(lu, V)
    sigma = (U @ Gd) / (1.0 + U @ Gv)
    return unvec(Gd - sigma * Gv, n, m), float(sigma)


# --------------------------------------------------------------------------
# Matrix functions
# --------------------------------------------------------------------------

def mat_exp(X) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Pade core (scipy)."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionMismatch("mat_exp requires a square matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        E = sla.expm(X)
    if not np.all(np.isfinite(E)):
        raise NumericalOverflow("matrix exponential overflowed")
    return E


def _symmetric_part(X: np.ndarray, name: str) -> np.ndarray:
    X = as_mat(X, name)
    _square(X, name)
    scale = max(np.linalg.norm(X), 1.0)
    if np.linalg.norm(X - X.T) > 1e-8 * scale:
        raise InputError(f"{name} must be symmetric")
    return 0.5 * (X + X.T)


def is_spd(X, rtol: float = 1e-12) -> bool:
    X = np.asarray(X, dtype=float)
    if X.shape[0] != X.shape[1] or not np.allclose(X, X.T, rtol=1e-10, atol=0):
        return False
    w = np.linalg.eigvalsh(0.5 * (X + X.T))
    return bool(w[0] > rtol * max(abs(w[-1]), abs(w[0])))


def mat_sqrt(X) -> np.ndarray:
    """Principal square root of a symmetric positive definite matrix.

    Raises ``NotSPD`` when the smallest eigenvalue is not above
    ``1e-12 * ||X||_2``.
    """
    X = _symmetric_part(X, "X")
    w, Q = np.linalg.eigh(X)
    norm2 = max(abs(w[0]), abs(w[-1]))
    if w[0] <= 1e-12 * norm2 or norm2 == 0.0:
        raise NotSPD(f"matrix is not positive definite (min eigenvalue {w[0]:.3e})")
    S = (Q * np.sqrt(w)) @ Q.T
    return 0.5 * (S + S.T)


# --------------------------------------------------------------------------
# Eigendecomposition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EigResult:
    Q: np.ndarray
    lam: np.ndarray
    condQ: float

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.Q) and not np.iscomplexobj(self.lam)

    @property
    def orthogonal(self) -> bool:
        return self.is_real and self.condQ <= 1 + 1e-8

    def Qinv(self) -> np.ndarray:
        if self.orthogonal:
            return self.Q.T
        return np.linalg.inv(self.Q)


def eig_general(N, max_cond: float = 1e12) -> EigResult:
    """Eigendecomposition ``N = Q diag(lam) Q^{-1}`` with a conditioning check.

    Symmetric input goes through ``eigh`` so that ``Q`` is orthogonal.
    ``NotDiagonalizable`` is raised when ``cond(Q)`` exceeds ``max_cond`` or
    the eigenpair residual is not small.
    """
    N = as_mat(N, "N")
    _square(N, "N")
    nrm = np.linalg.norm(N)
    if np.linalg.norm(N - N.T) <= 1e-14 * nrm or nrm == 0.0:
        lam, Q = np.linalg.eigh(0.5 * (N + N.T))
        return EigResult(Q=Q, lam=lam, condQ=float(np.linalg.cond(Q)))

    lam, Q = np.linalg.eig(N)
    Q = Q / np.linalg.norm(Q, axis=0)
    if np.all(lam.imag == 0):
        lam, Q = lam.real, Q.real
    condQ = float(np.linalg.cond(Q))
    if not np.isfinite(condQ) or condQ > max_cond:
        raise NotDiagonalizable(f"eigenvector matrix condition number {condQ:.3e}")
    if np.linalg.norm(N @ Q - Q * lam) > 1e-8 * nrm:
        raise NotDiagonalizable("eigenpair residual check failed")
    return EigResult(Q=Q, lam=lam, condQ=condQ)


def companion_roots(coeffs: Sequence[float]) -> np.ndarray:
    """Roots of ``c[0] r^d + ... + c[d]`` from the companion matrix eigenvalues.

    Leading zeros must already be trimmed by the caller.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0 or c[0] == 0.0:
        raise ValueError("leading coefficient must be nonzero")
    d = c.size - 1
    if d == 0:
        return np.zeros(0, dtype=complex)
    comp = np.zeros((d, d))
    comp[0, :] = -c[1:] / c[0]
    comp[1:, :-1] = np.eye(d - 1)
    return np.linalg.eigvals(comp).astype(complex)
