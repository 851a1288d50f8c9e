"""Manufactured instances for the fixed-point experiments.

Every instance fixes the solution ``X*`` first and sets ``M = X* - f(X*) N``,
so the exact answer is known.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy.optimize import brentq

from . import fixpoint, polyf
from .fixpoint import PsiKind, evaluate_f
from .matcore import is_spd, mat_exp, mat_sqrt

__all__ = [
    "Instance",
    "spd_gram_root",
    "table1_instance",
    "table1_rows",
    "table1_csv",
    "fig1_instance",
    "fig1_trajectory",
    "fig1_csv",
    "TABLE1_SIGMAS",
    "example31_residuals",
]

# the contraction-factor column of the published sweep
TABLE1_SIGMAS = (0.079, 0.176, 0.335, 0.570, 0.889, 1.296, 1.789)


@dataclass
class Instance:
    M: np.ndarray
    N: np.ndarray
    X_star: np.ndarray
    psi: PsiKind
    alpha: float = float("nan")
    sigma: float = float("nan")


def spd_gram_root(G0: np.ndarray) -> np.ndarray:
    """``(G0^T G0)^{1/2}``."""
    return mat_sqrt(G0.T @ G0)


def _exp_sigma(N: np.ndarray, X: np.ndarray) -> float:
    return float(np.trace(N @ mat_exp(-X)))


def table1_instance(sigma: float, n: int = 10, rng=None, max_draws: int = 50) -> Instance:
    """Instance with ``trace(N exp(-X*)) = sigma`` and ``X* = sqrt(alpha) G``.

    ``G`` and ``N`` are Gram square roots of Gaussian matrices; ``alpha`` is
    found by a bracketing root solve (the factor decreases in ``alpha``).
    ``M`` need not be positive definite (it is not for large ``sigma``).
    """
    rng = np.random.default_rng(rng)
    for _ in range(max_draws):
        G = spd_gram_root(rng.standard_normal((n, n)))
        N = spd_gram_root(rng.standard_normal((n, n)))
        if np.trace(N) <= sigma:
            continue
        hi = 1.0
        while _exp_sigma(N, hi * G) > sigma:
            hi *= 2.0
        t = brentq(lambda t: _exp_sigma(N, t * G) - sigma, 0.0, hi, xtol=1e-14, rtol=1e-14)
        X_star = t * G
        M = X_star - evaluate_f(PsiKind.EXP_NEG, X_star) * N
        return Instance(M, N, X_star, PsiKind.EXP_NEG, alpha=t * t, sigma=sigma)
    raise RuntimeError(f"could not manufacture an instance for sigma = {sigma}")


def table1_rows(
    sigmas: Iterable[float] = TABLE1_SIGMAS,
    n: int = 10,
    seed: int = 1,
    tol: float = fixpoint.DEFAULT_TOL,
    max_iter: int = fixpoint.DEFAULT_MAX_ITER,
    mode="diag",
) -> list[dict]:
    rows = []
    for i, s in enumerate(sigmas):
        inst = table1_instance(s, n=n, rng=np.random.default_rng([seed, i]))
        _, rep = fixpoint.iterate(inst.M, inst.N, PsiKind.EXP_NEG, tol=tol, max_iter=max_iter, mode=mode)
        rows.append({
            "sigma": s,
            "alpha": inst.alpha,
            "iterations": rep.iterations,
            "final_residual": rep.residuals[-1] if rep.residuals else 0.0,
            "termination": rep.termination.value,
            "tail_ratio": rep.tail_ratio(),
        })
    return rows


def table1_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sigma", "alpha", "iterations", "final_residual"])
    for r in rows:
        w.writerow([r["sigma"], repr(r["alpha"]), r["iterations"], repr(r["final_residual"])])
    return buf.getvalue()


def fig1_instance(psi, n: int = 10, rng=None, zero_n: bool = False, max_draws: int = 200,
                  min_sigma: float = 0.05) -> Instance:
    """Instance with ``M`` and ``N`` positive definite.

    ``X*`` is the Gram root of ``2n`` times a Gaussian matrix. For
    ``EXP_NEG``, ``N`` is a Gram root of a Gaussian matrix; for ``SQRT`` it is
    ``0.2`` times the Gram root of a uniform matrix, shrunk further if needed
    so that ``M`` stays positive definite. ``EXP_NEG`` draws with a
    contraction factor below ``min_sigma`` are rejected.
    """
    psi = PsiKind(psi) if not isinstance(psi, PsiKind) else psi
    rng = np.random.default_rng(rng)
    for _ in range(max_draws):
        X_star = spd_gram_root(2 * n * rng.standard_normal((n, n)))
        if psi is PsiKind.EXP_NEG:
            N = spd_gram_root(rng.standard_normal((n, n)))
        else:
            N = 0.2 * spd_gram_root(rng.uniform(size=(n, n)))
        if zero_n:
            N = np.zeros((n, n))
        fx = evaluate_f(psi, X_star)
        if psi is PsiKind.SQRT and not zero_n:
            # keep M = X* - f(X*) N comfortably positive definite
            lim = 0.5 * np.linalg.eigvalsh(X_star)[0] / (fx * np.linalg.eigvalsh(N)[-1])
            N = N * min(1.0, lim)
        M = X_star - fx * N
        if not is_spd(M):
            continue
        if psi is PsiKind.EXP_NEG and not zero_n and _exp_sigma(N, X_star) < min_sigma:
            # too fast a contraction leaves no visible sign pattern
            continue
        return Instance(M, N, X_star, psi)
    raise RuntimeError("could not manufacture a positive definite M")


FIG1_TOL = 1e-13


def fig1_trajectory(psi, n: int = 10, seed: int = 1, tol: float = FIG1_TOL,
                    max_iter: int = fixpoint.DEFAULT_MAX_ITER, zero_n: bool = False, mode="diag"):
    """Run the diagonalized iteration; return ``(diag_values, report)``.

    ``diag_values[k]`` is the ``(n/2, n/2)`` entry (1-based) of ``X1`` at
    iteration ``k``.
    """
    inst = fig1_instance(psi, n=n, rng=seed, zero_n=zero_n)
    _, rep = fixpoint.iterate(inst.M, inst.N, inst.psi, tol=tol, max_iter=max_iter, mode=mode)
    idx = n // 2 - 1
    return [float(np.real(d[idx])) for d in rep.iterates_diag], rep


def fig1_csv(values: list, report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "diag_value", "f_value"])
    # one row per iterate k >= 1; the starting point M is not a row
    for k, (v, fk) in enumerate(zip(values, report.f_values)):
        if k == 0:
            continue
        w.writerow([k, repr(v), repr(float(fk))])
    return buf.getvalue()


def example31_residuals(n: int = 10, seed_m: int = 2, seed_n: int = 1) -> dict:
    """``|trace(X_i^{-1}) - r_i|`` for both rank-one ``trace(X^{-1})`` solvers.

    ``rank1_M`` draws ``m1, m2, N`` from Gaussian data with seed ``seed_m``;
    ``rank1_N`` draws ``n1, n2, M`` with seed ``seed_n``. Spurious roots are
    listed with their reasons.
    """
    out = {}
    rng = np.random.default_rng(seed_m)
    m1, m2 = rng.standard_normal(n), rng.standard_normal(n)
    N = rng.standard_normal((n, n))
    out["rank1_M"] = polyf.solve_trace_inverse_rank1M(m1, m2, N)
    rng = np.random.default_rng(seed_n)
    n1, n2 = rng.standard_normal(n), rng.standard_normal(n)
    M = rng.standard_normal((n, n))
    out["rank1_N"] = polyf.solve_trace_inverse_rank1N(M, n1, n2)
    return {
        k: {
            "roots": [complex(e.root) for e in sols.entries],
            "f_residuals": [float(e.f_residual) for e in sols.entries],
            "spurious": [(complex(r.root), r.reason) for r in sols.spurious],
        }
        for k, sols in out.items()
    }
