"""Solvers for ``X = M + f(X) N`` when ``r = f(X)`` obeys a scalar polynomial.

Covered functionals: ``trace(X^p)``, ``||X||_F^2`` and ``trace(X^{-1})`` with
a rank-one ``M`` or a rank-one ``N``. Every polynomial root is turned into a
candidate ``X = M + r N`` and checked against ``f(X) = r``; roots that fail
are kept in ``SolutionSet.spurious`` with the reason.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from .errors import DegenerateCase, DimensionMismatch, NoRealSolution, SingularM, SingularN
from .matcore import as_mat, as_vec, companion_roots

__all__ = [
    "Solution",
    "Rejected",
    "SolutionSet",
    "trace_power_coefficients",
    "solve_trace_power2",
    "solve_trace_power_general",
    "solve_frobenius",
    "solve_trace_inverse_rank1M",
    "solve_trace_inverse_rank1N",
]

ACCEPT_RTOL = 1e-8
# relative size below which a root's imaginary part is treated as round-off
IMAG_RTOL = 1e-12


@dataclass
class Solution:
    root: complex
    X: np.ndarray
    f_residual: float
    eq_residual: float

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.X)


@dataclass
class Rejected:
    root: complex
    reason: str


@dataclass
class SolutionSet:
    entries: list = field(default_factory=list)
    spurious: list = field(default_factory=list)
    degree: int = 0
    coefficients: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def roots(self) -> np.ndarray:
        return np.array([e.root for e in self.entries])

    def real_entries(self) -> list:
        return [e for e in self.entries if e.is_real]


def _clean_root(r: complex) -> complex | float:
    r = complex(r)
    if abs(r.imag) <= IMAG_RTOL * (1.0 + abs(r.real)):
        return r.real
    return r


def _verify(
    roots,
    M: np.ndarray,
    N: np.ndarray,
    f: Callable[[np.ndarray], complex],
    degree: int,
    coefficients=None,
    accept: Callable[[complex], str | None] | None = None,
) -> SolutionSet:
    out = SolutionSet(degree=degree, coefficients=coefficients)
    scale = np.linalg.norm(M) + np.linalg.norm(N)
    for raw in roots:
        r = _clean_root(raw)
        reason = accept(r) if accept is not None else None
        if reason:
            out.spurious.append(Rejected(r, reason))
            continue
        X = M + r * N
        try:
            with np.errstate(all="raise"):
                fx = f(X)
        except (np.linalg.LinAlgError, FloatingPointError):
            out.spurious.append(Rejected(r, "f(X) undefined (singular X)"))
            continue
        if not np.isfinite(fx):
            out.spurious.append(Rejected(r, "f(X) not finite"))
            continue
        tol = ACCEPT_RTOL * (1.0 + abs(r))
        f_res = float(abs(fx - r))
        eq_res = float(np.linalg.norm(X - M - fx * N) / scale) if scale > 0 else 0.0
        if f_res <= tol and eq_res <= tol:
            out.entries.append(Solution(r, X, f_res, eq_res))
        else:
            out.spurious.append(Rejected(r, f"verification failed: |f(X) - r| = {f_res:.3e}"))
    return out


def _square_pair(M, N) -> tuple[np.ndarray, np.ndarray]:
    M = as_mat(M, "M")
    N = as_mat(N, "N")
    if M.shape != N.shape or M.shape[0] != M.shape[1]:
        raise DimensionMismatch("M and N must be square of equal size")
    return M, N


def _quadratic_roots(a: float, b: float, c: float) -> list:
    """Roots of ``a r^2 + b r + c`` (``a != 0``) without cancellation."""
    disc = b * b - 4.0 * a * c
    if disc >= 0:
        q = -0.5 * (b + np.copysign(np.sqrt(disc), b))
        if q == 0.0:
            return [0.0, 0.0]
        return [q / a, c / q]
    sq = 1j * np.sqrt(-disc)
    return [(-b + sq) / (2 * a), (-b - sq) / (2 * a)]


def solve_trace_power2(M, N) -> SolutionSet:
    """``f(X) = trace(X^2)``: roots of ``f(N) r^2 + (2 trace(MN) - 1) r + f(M) = 0``."""
    M, N = _square_pair(M, N)
    fM = np.trace(M @ M)
    fN = np.trace(N @ N)
    beta = 2.0 * np.trace(M @ N) - 1.0
    f = lambda X: np.trace(X @ X)
    if abs(fN) <= 1e-12 * np.linalg.norm(N) ** 2 or not np.any(N):
        if beta == 0.0:
            raise DegenerateCase("f(N) = 0 and beta = 0")
        return _verify([-fM / beta], M, N, f, 1, np.array([beta, fM]))
    roots = _quadratic_roots(fN, beta, fM)
    return _verify(roots, M, N, f, 2, np.array([fN, beta, fM]))


def trace_power_coefficients(M, N, p: int) -> np.ndarray:
    """Coefficients ``c[k]`` of ``trace((M + rN)^p) = sum_k c[k] r^k``.

    Every ordered word in ``{M, N}`` of length ``p`` is multiplied out and its
    trace added to the bucket of its ``N``-count (prefix products are shared
    in a depth-first walk).
    """
    M, N = _square_pair(M, N)
    if p < 1:
        raise ValueError("p must be positive")
    coeffs = np.zeros(p + 1)
    letters = ((M, 0), (N, 1))

    def walk(prefix: np.ndarray, depth: int, count: int) -> None:
        if depth == p:
            coeffs[count] += np.trace(prefix)
            return
        for mat, is_n in letters:
            walk(prefix @ mat, depth + 1, count + is_n)

    for mat, is_n in letters:
        walk(mat, 1, is_n)
    return coeffs


def solve_trace_power_general(M, N, p: int) -> SolutionSet:
    """``f(X) = trace(X^p)`` for ``2 <= p <= 12`` via companion-matrix roots.

    The equation in ``r`` is ``trace((M + rN)^p) - r = 0``. Leading
    coefficients below round-off level (relative to the size of the words
    that produce them) are dropped, which lowers the degree.
    """
    M, N = _square_pair(M, N)
    p = int(p)
    if not 2 <= p <= 12:
        raise ValueError("p must lie in 2..12")
    c = trace_power_coefficients(M, N, p)
    c[1] -= 1.0
    nm, nn = np.linalg.norm(M), np.linalg.norm(N)
    degree = p
    while degree > 0:
        bound = 1e-12 * comb(p, degree) * nm ** (p - degree) * nn ** degree
        if degree == 1:
            bound = max(bound, 1e-15)
        if abs(c[degree]) > bound:
            break
        degree -= 1
    f = lambda X: np.trace(np.linalg.matrix_power(X, p))
    if degree == 0:
        return SolutionSet(degree=0, coefficients=c[::-1])
    high_to_low = c[: degree + 1][::-1]
    roots = companion_roots(high_to_low)
    return _verify(roots, M, N, f, degree, high_to_low)


def solve_frobenius(M, N) -> SolutionSet:
    """``f(X) = ||X||_F^2``; only real nonnegative roots are admissible."""
    M = as_mat(M, "M")
    N = as_mat(N, "N")
    if M.shape != N.shape:
        raise DimensionMismatch("M and N must have equal shape")
    a = float(np.sum(N * N))
    b = 2.0 * float(np.sum(M * N)) - 1.0
    c = float(np.sum(M * M))
    f = lambda X: np.sum(X * X)

    def admissible(r):
        if isinstance(r, complex):
            return "complex root (f is real and nonnegative)"
        if r < 0:
            return "negative root (f is nonnegative)"
        return None

    if a == 0.0:
        roots, coeffs, deg = [-c / b], np.array([b, c]), 1
    else:
        roots, coeffs, deg = _quadratic_roots(a, b, c), np.array([a, b, c]), 2
    out = _verify(roots, M, N, f, deg, coeffs, accept=admissible)
    if not out.entries:
        raise NoRealSolution(
            "no admissible root: " + "; ".join(f"{s.root}: {s.reason}" for s in out.spurious)
        )
    return out


def _trace_inv(X):
    return np.trace(np.linalg.inv(X))


def _check_invertible(X: np.ndarray, exc, name: str) -> None:
    if np.linalg.cond(X) > 1e12:
        raise exc(f"{name} is numerically singular")


def solve_trace_inverse_rank1M(m1, m2, N) -> SolutionSet:
    """``f(X) = trace(X^{-1})`` with ``M = m1 m2^T`` and ``N`` invertible.

    Nonsingular solutions are ``X = M + r N`` with ``r`` a root of
    ``r^3 + eta2 r^2 + eta1 r + eta0``, where ``eta2 = m2^T N^{-1} m1``,
    ``eta1 = -trace(N^{-1})`` and ``eta0 = eta1 eta2 + m2^T N^{-2} m1``.
    """
    m1 = as_vec(m1, "m1")
    m2 = as_vec(m2, "m2")
    N = as_mat(N, "N")
    n = N.shape[0]
    if N.shape != (n, n) or m1.shape[0] != n or m2.shape[0] != n:
        raise DimensionMismatch("m1, m2 must have length n for an n x n N")
    _check_invertible(N, SingularN, "N")
    w = np.linalg.solve(N, m1)
    eta2 = m2 @ w
    eta1 = -_trace_inv(N)
    eta0 = eta1 * eta2 + m2 @ np.linalg.solve(N, w)
    coeffs = np.array([1.0, eta2, eta1, eta0])
    roots = companion_roots(coeffs)
    M = np.outer(m1, m2)

    zero_tol = 1e-13 * (1.0 + np.abs(roots).max())

    def nonzero(r):
        # r = 0 gives X = m1 m2^T: singular for n > 1, and f(X) = 0 is impossible
        return "zero root gives a singular X" if abs(r) <= zero_tol else None

    return _verify(roots, M, N, _trace_inv, 3, coeffs, accept=nonzero)


def solve_trace_inverse_rank1N(M, n1, n2) -> SolutionSet:
    """``f(X) = trace(X^{-1})`` with ``N = n1 n2^T`` and ``M`` invertible.

    ``r`` solves ``eta2 r^2 + eta1 r + eta0 = 0`` with ``eta0 = -trace(M^{-1})``,
    ``eta2 = n2^T M^{-1} n1`` and ``eta1 = 1 + eta0 eta2 + n2^T M^{-2} n1``.
    """
    M = as_mat(M, "M")
    n1 = as_vec(n1, "n1")
    n2 = as_vec(n2, "n2")
    n = M.shape[0]
    if M.shape != (n, n) or n1.shape[0] != n or n2.shape[0] != n:
        raise DimensionMismatch("n1, n2 must have length n for an n x n M")
    _check_invertible(M, SingularM, "M")
    w = np.linalg.solve(M, n1)
    eta0 = -_trace_inv(M)
    eta2 = n2 @ w
    eta1 = 1.0 + eta0 * eta2 + n2 @ np.linalg.solve(M, w)
    N = np.outer(n1, n2)
    scale = np.linalg.norm(n1) * np.linalg.norm(n2) * np.linalg.norm(np.linalg.inv(M))
    if abs(eta2) <= 1e-14 * max(scale, 1.0):
        roots, coeffs, deg = [-eta0 / eta1], np.array([eta1, eta0]), 1
    else:
        roots, coeffs, deg = companion_roots([eta2, eta1, eta0]), np.array([eta2, eta1, eta0]), 2
    return _verify(roots, M, N, _trace_inv, deg, coeffs)
