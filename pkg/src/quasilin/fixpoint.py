"""Fixed-point iteration for ``X = M + f(X) N`` with ``f(X) = trace(psi(X))``.

With ``N = Q diag(lam) Q^{-1}`` the iteration runs on ``X1 = Q^{-1} X Q``:
``X1_{k+1} = M1 + f(X1_k) diag(lam)``. Only the diagonal of ``X1`` moves, so
each step is a diagonal update ``diag(X1_{k+1}) = diag(M1) + f_k lam``
followed by one evaluation of ``f`` (trace is similarity invariant).
"""
from __future__ import annotations

import csv
import enum
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NotDiagonalizable, NotSPD, NumericalOverflow, TooFewIterations
from .matcore import as_mat, eig_general, mat_exp, mat_sqrt
from .problem import PsiKind

__all__ = [
    "PsiKind",
    "Mode",
    "Termination",
    "IterationReport",
    "Prediction",
    "Monotonicity",
    "evaluate_f",
    "iterate",
    "frechet_trace",
    "frechet_trace_fd",
    "sqrt_frechet_variants",
    "convergence_predicate",
    "classify_monotonicity",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 500
DIAG_MAX_COND = 1e8


class Mode(enum.Enum):
    DIAGONALIZED = "diag"
    DIRECT = "direct"


class Termination(enum.Enum):
    CONVERGED = "converged"
    ITERATION_CAP = "iteration_cap"
    DIVERGED = "diverged"


class Prediction(enum.Enum):
    CONTRACT = "contract"
    NO_GUARANTEE = "no_guarantee"


class Monotonicity(enum.Enum):
    MONOTONE_INCREASING = "monotone_increasing"
    ALTERNATING = "alternating"
    IRREGULAR = "irregular"


def _psi(psi) -> PsiKind:
    return psi if isinstance(psi, PsiKind) else PsiKind(psi)


def evaluate_f(psi: PsiKind, X) -> float:
    """``trace(exp(-X))`` or ``trace(X^{1/2})``.

    The square root needs a symmetric positive definite argument; tiny
    asymmetry from round-off is removed first.
    """
    psi = _psi(psi)
    X = np.asarray(X)
    if psi is PsiKind.EXP_NEG:
        return float(np.real(np.trace(mat_exp(-X))))
    Xs = np.real(X) if np.iscomplexobj(X) else X
    return float(np.trace(mat_sqrt(0.5 * (Xs + Xs.T))))


@dataclass
class IterationReport:
    """Trace of one fixed-point run.

    ``iterates_diag[k]`` and ``f_values[k]`` belong to iterate ``k`` (``k = 0``
    is the starting point ``M``). ``residuals[k-1]`` is the relative residual
    ``||X_k - (M + f(X_k) N)|| / ||M||`` of iterate ``k >= 1`` so its length
    equals the number of iterations performed. ``contraction_ratios[j]`` is
    ``||X_{j+2} - X_{j+1}|| / ||X_{j+1} - X_j||``.
    """

    iterates_diag: list = field(default_factory=list)
    f_values: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    termination: Termination = Termination.ITERATION_CAP
    iterations: int = 0
    sigma_estimate: float = float("nan")
    mode: Mode = Mode.DIAGONALIZED
    condQ: float = 1.0
    history: list | None = None

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    def tail_ratio(self, count: int = 3) -> float:
        tail = [r for r in self.contraction_ratios[-count:] if np.isfinite(r)]
        return float(np.mean(tail)) if tail else float("nan")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "f_value", "residual", "ratio"])
        for k, fk in enumerate(self.f_values):
            res = self.residuals[k - 1] if 1 <= k <= len(self.residuals) else ""
            ratio = self.contraction_ratios[k - 2] if 2 <= k <= len(self.contraction_ratios) + 1 else ""
            w.writerow([k, repr(fk), repr(res) if res != "" else "", repr(ratio) if ratio != "" else ""])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "termination": self.termination.value,
            "iterations": self.iterations,
            "mode": self.mode.value,
            "condQ": self.condQ,
            "sigma_estimate": self.sigma_estimate,
            "f_values": list(map(float, self.f_values)),
            "residuals": list(map(float, self.residuals)),
            "contraction_ratios": list(map(float, self.contraction_ratios)),
        }


def _residual(M, N, X, fX, normM) -> float:
    return float(np.linalg.norm(X - (M + fX * N)) / normM)


def iterate(
    M,
    N,
    psi,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    mode: Mode | str = Mode.DIAGONALIZED,
    record_history: bool = False,
) -> tuple[np.ndarray, IterationReport]:
    """Run the fixed-point map starting from ``X_0 = M``.

    Stops when the relative residual of the newest iterate drops below ``tol``
    or after ``max_iter`` iterations. In diagonalized mode a badly
    conditioned (or defective) ``N`` triggers a fallback to direct mode.
    Overflow of ``exp`` ends the run as diverged; a square-root iterate that
    leaves the positive definite cone raises ``NotSPD``.
    With ``record_history`` the full working-coordinate iterates are kept
    (``X1`` in diagonalized mode, ``X`` in direct mode).
    """
    psi = _psi(psi)
    mode = Mode(mode) if not isinstance(mode, Mode) else mode
    M = as_mat(M, "M")
    N = as_mat(N, "N")
    if M.shape != N.shape or M.shape[0] != M.shape[1]:
        raise ValueError("M and N must be square of equal size")
    normM = np.linalg.norm(M)
    if normM == 0.0:
        normM = 1.0

    report = IterationReport(mode=mode)
    eig = None
    if mode is Mode.DIAGONALIZED:
        try:
            eig = eig_general(N, max_cond=DIAG_MAX_COND)
        except NotDiagonalizable as exc:
            log.warning("N not usable for diagonalized iteration (%s); using direct mode", exc)
            mode = report.mode = Mode.DIRECT

    if mode is Mode.DIAGONALIZED:
        Q, lam = eig.Q, eig.lam
        Qinv = eig.Qinv()
        report.condQ = eig.condQ
        M1 = Qinv @ M @ Q
        X1 = M1.copy()
        base_diag = np.diag(M1).copy()
        # f is evaluated in working coordinates unless psi needs a real symmetric argument
        eval_working = psi is PsiKind.EXP_NEG or eig.orthogonal

        def to_x(X1):
            X = Q @ X1 @ Qinv
            return np.real(X) if np.iscomplexobj(X) else X

        def f_of(X1):
            return evaluate_f(psi, X1 if eval_working else to_x(X1))

        work = X1
        fk = f_of(X1)
        diag_k = np.diag(X1).copy()
    else:
        work = M.copy()
        fk = evaluate_f(psi, work)
        diag_k = np.diag(work).copy()

    report.iterates_diag.append(diag_k)
    report.f_values.append(fk)
    if record_history:
        report.history = [work.copy()]

    prev_step = None
    for k in range(1, max_iter + 1):
        if mode is Mode.DIAGONALIZED:
            X1 = work.copy()
            np.fill_diagonal(X1, base_diag + fk * lam)
            work = X1
            X = to_x(X1)
            diag_new = np.diag(X1).copy()
            step = np.linalg.norm(diag_new - report.iterates_diag[-1])
        else:
            X = M + fk * N
            if psi is PsiKind.SQRT:
                X = 0.5 * (X + X.T)
            step = np.linalg.norm(X - work)
            work = X
            diag_new = np.diag(X).copy()
        try:
            f_new = f_of(X1) if mode is Mode.DIAGONALIZED else evaluate_f(psi, X)
        except (NumericalOverflow, np.linalg.LinAlgError) as exc:
            log.info("iteration %d left the domain of f: %s", k, exc)
            f_new = float("nan")

        report.iterations = k
        report.iterates_diag.append(diag_new)
        report.f_values.append(f_new)
        if record_history:
            report.history.append(work.copy())

        if not np.isfinite(f_new):
            report.termination = Termination.DIVERGED
            break
        res = _residual(M, N, X, f_new, normM)
        report.residuals.append(res)
        if prev_step is not None:
            report.contraction_ratios.append(step / prev_step if prev_step > 0 else float("nan"))
        prev_step = step
        fk = f_new
        if res < tol:
            report.termination = Termination.CONVERGED
            break
        if res > 1e200:
            report.termination = Termination.DIVERGED
            break
    else:
        report.termination = Termination.ITERATION_CAP

    report.sigma_estimate = report.tail_ratio()
    return X, report


def frechet_trace(psi, X, direction) -> float:
    """Trace of the Frechet derivative of ``psi`` at ``X`` in ``direction``.

    ``EXP_NEG``: ``trace(direction exp(-X))``, i.e. the magnitude of the
    derivative of ``trace(exp(-X))`` (the true derivative carries a minus
    sign). ``SQRT``: ``trace(L)`` where ``X^{1/2} L + L X^{1/2} = direction``,
    which equals ``0.5 trace(X^{-1/2} direction)``.
    """
    psi = _psi(psi)
    X = as_mat(X, "X")
    E = as_mat(direction, "direction")
    if psi is PsiKind.EXP_NEG:
        return float(np.trace(E @ mat_exp(-X)))
    S = mat_sqrt(X)
    return float(0.5 * np.trace(np.linalg.solve(S, E)))


def sqrt_frechet_variants(X, direction) -> dict:
    """Both candidate square-root derivative traces, for diagnostics.

    ``root``: ``0.5 trace(X^{-1/2} E)`` (derivative of ``trace(X^{1/2})``).
    ``inverse``: ``0.5 trace(X^{-1} E)`` (inverse of ``Z -> XZ + ZX`` applied
    at ``X`` itself).
    """
    X = as_mat(X, "X")
    E = as_mat(direction, "direction")
    S = mat_sqrt(X)
    return {
        "root": float(0.5 * np.trace(np.linalg.solve(S, E))),
        "inverse": float(0.5 * np.trace(np.linalg.solve(0.5 * (X + X.T), E))),
    }


def frechet_trace_fd(psi, X, direction, h: float | None = None) -> float:
    """Signed central finite difference of ``t -> trace(psi(X + t E))`` at 0."""
    psi = _psi(psi)
    X = as_mat(X, "X")
    E = as_mat(direction, "direction")
    if h is None:
        h = 1e-5 * np.linalg.norm(X) / np.linalg.norm(E)
    return (evaluate_f(psi, X + h * E) - evaluate_f(psi, X - h * E)) / (2 * h)


def convergence_predicate(X_ref, N, psi) -> tuple[float, Prediction]:
    """``sigma = |frechet_trace(psi, X_ref, N)|``; contraction is predicted iff ``sigma < 1``."""
    N = as_mat(N, "N")
    if not np.any(N):
        return 0.0, Prediction.CONTRACT
    sigma = abs(frechet_trace(psi, X_ref, N))
    return sigma, Prediction.CONTRACT if sigma < 1.0 else Prediction.NO_GUARANTEE


def classify_monotonicity(report: IterationReport) -> Monotonicity:
    """Sign pattern of successive differences of ``f`` along the run.

    Differences at round-off level (after the iteration has settled) are
    ignored, as is everything after the first such difference.
    """
    f = np.asarray(report.f_values, dtype=float)
    if report.iterations < 4 or f.size < 5:
        raise TooFewIterations(f"need at least 4 iterations, got {report.iterations}")
    d = np.diff(f)
    floor = 1e3 * np.finfo(float).eps * max(1.0, np.abs(f).max())
    significant = []
    for x in d:
        if abs(x) <= floor:
            break
        significant.append(x)
    if len(significant) < 2:
        return Monotonicity.IRREGULAR
    s = np.sign(significant)
    if np.all(s > 0):
        return Monotonicity.MONOTONE_INCREASING
    if np.all(s[1:] == -s[:-1]):
        return Monotonicity.ALTERNATING
    return Monotonicity.IRREGULAR
