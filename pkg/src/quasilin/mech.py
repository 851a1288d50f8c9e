"""Newton-step equations of an interior-point projection in linear elasticity.

The projection of a symmetric ``Ybar`` onto the negative semidefinite cone in
the energy norm of an elasticity map ``C`` is posed as

    min trace(Y C(Y + Ybar))  subject to  Y >= 0,

with perturbed optimality conditions ``S = C(Y + Ybar)``, ``Y S = mu I``.
The AHO and NT symmetrizations of the Newton step ``X`` for ``Y`` are
quasi-linear matrix equations; this module builds them.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import linearf
from .errors import DimensionMismatch, InvalidElasticity, NotSPD, StepFailure
from .matcore import Dense, Identity, as_mat, mat_sqrt
from .problem import LinearTrace, QuasiLinearProblem

__all__ = [
    "ElasticityIso",
    "ElasticityTI",
    "isotropic_apply",
    "build_aho_iso",
    "build_nt_iso",
    "build_ti_problem",
    "ReducedProblem",
    "AHOFrame",
    "NTFrame",
    "nt_scaling",
    "aho_source_residual",
    "nt_source_residual",
    "DemoStep",
    "projection_demo",
    "trajectory_csv",
]

FRACTION_TO_BOUNDARY = 0.95
MAX_HALVINGS = 30


@dataclass(frozen=True)
class ElasticityIso:
    """Isotropic elasticity with Young's modulus ``E`` and Poisson ratio ``nu``."""

    E: float
    nu: float

    def __post_init__(self):
        if not self.E > 0:
            raise InvalidElasticity(f"Young's modulus must be positive, got {self.E}")
        if not -1.0 < self.nu < 0.5:
            raise InvalidElasticity(f"Poisson ratio must lie in (-1, 1/2), got {self.nu}")

    @property
    def shear2(self) -> float:
        """``E / (1 + nu)``, the coefficient of ``X``."""
        return self.E / (1.0 + self.nu)

    @property
    def lame(self) -> float:
        """``nu E / ((1 + nu)(1 - 2 nu))``, the coefficient of ``trace(X) I``."""
        return self.nu * self.E / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    def __call__(self, X) -> np.ndarray:
        return isotropic_apply(self, X)


@dataclass(frozen=True)
class ElasticityTI:
    """``C(X) = sum_i trace(H_i X) K_i`` with symmetric ``H_i``, ``K_i``."""

    terms: tuple

    def __init__(self, terms: Sequence[tuple]):
        checked = []
        for i, (H, K) in enumerate(terms):
            H = as_mat(H, f"H[{i}]")
            K = as_mat(K, f"K[{i}]")
            if H.shape != K.shape or H.shape[0] != H.shape[1]:
                raise DimensionMismatch(f"H[{i}] and K[{i}] must be square of equal size")
            if not (np.allclose(H, H.T) and np.allclose(K, K.T)):
                raise InvalidElasticity(f"H[{i}] and K[{i}] must be symmetric")
            checked.append((H, K))
        object.__setattr__(self, "terms", tuple(checked))

    @property
    def ell(self) -> int:
        return len(self.terms)

    @property
    def n(self) -> int:
        return self.terms[0][0].shape[0]

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X)
        return sum(np.trace(H @ X) * K for H, K in self.terms)

    @classmethod
    def from_isotropic(cls, el: ElasticityIso, n: int) -> "ElasticityTI":
        """Encode an isotropic map with ``n(n+1)/2`` terms.

        Uses an orthonormal basis ``E_i`` of symmetric matrices:
        ``H_i = E_i`` and ``K_i = a E_i + b trace(E_i) I``, which reproduces
        ``a X + b trace(X) I`` on symmetric ``X``.
        """
        basis = []
        for i in range(n):
            for j in range(i, n):
                Eij = np.zeros((n, n))
                if i == j:
                    Eij[i, i] = 1.0
                else:
                    Eij[i, j] = Eij[j, i] = 1.0 / np.sqrt(2.0)
                basis.append(Eij)
        I = np.eye(n)
        return cls([(B, el.shear2 * B + el.lame * np.trace(B) * I) for B in basis])


def isotropic_apply(el: ElasticityIso, X) -> np.ndarray:
    """``E/(1+nu) (X + nu/(1-2nu) trace(X) I)``."""
    X = as_mat(X, "X")
    if X.shape[0] != X.shape[1]:
        raise DimensionMismatch("X must be square")
    return el.shear2 * X + el.lame * np.trace(X) * np.eye(X.shape[0])


def _spd_factor(W, name: str):
    W = as_mat(W, name)
    if W.shape[0] != W.shape[1] or not np.allclose(W, W.T, rtol=1e-12, atol=1e-14 * np.abs(W).max()):
        raise NotSPD(f"{name} must be symmetric")
    try:
        return sla.cho_factor(0.5 * (W + W.T))
    except np.linalg.LinAlgError as exc:
        raise NotSPD(f"{name} is not positive definite") from exc


def _require_spd(X, name: str) -> np.ndarray:
    _spd_factor(X, name)
    X = as_mat(X, name)
    return 0.5 * (X + X.T)


def build_aho_iso(S, Y, Ybar, el: ElasticityIso, mu: float) -> QuasiLinearProblem:
    """AHO step equation ``S X + X S + C(X) Y + Y C(X) = D`` for isotropic ``C``.

    With ``C(X) = a X + b trace(X) I`` it becomes ``A X + X A + trace(X) 2b Y = D``
    where ``A = S + a Y``. The right-hand side is
    ``D = 2 mu I - (YS + SY) - (Y R + R Y)`` with ``R = C(Y + Ybar) - S``.
    """
    S = _require_spd(S, "S")
    Y = _require_spd(Y, "Y")
    Ybar = as_mat(Ybar, "Ybar")
    n = S.shape[0]
    A = S + el.shear2 * Y
    C = 2.0 * el.lame * Y
    R = isotropic_apply(el, Y + Ybar) - S
    D = 2.0 * mu * np.eye(n) - (Y @ S + S @ Y) - (Y @ R + R @ Y)
    return QuasiLinearProblem(A, A, [(C, LinearTrace(Identity()))], D)


def aho_source_residual(S, Y, C_map, X, D) -> float:
    """Relative residual of ``S X + X S + C(X) Y + Y C(X) = D``."""
    CX = C_map(X)
    lhs = S @ X + X @ S + CX @ Y + Y @ CX
    scale = 2 * np.linalg.norm(S) * np.linalg.norm(X) + 2 * np.linalg.norm(CX) * np.linalg.norm(Y)
    return float(np.linalg.norm(lhs - D) / (scale + np.linalg.norm(D)))


def nt_source_residual(W, C_map, X, D) -> float:
    """Relative residual of ``W X W + C(X) = D``."""
    CX = C_map(X)
    lhs = W @ X @ W + CX
    scale = np.linalg.norm(W) ** 2 * np.linalg.norm(X) + np.linalg.norm(CX)
    return float(np.linalg.norm(lhs - D) / (scale + np.linalg.norm(D)))


def build_nt_iso(W, D, el: ElasticityIso) -> QuasiLinearProblem:
    """NT step equation ``W X W + C(X) = D`` multiplied on the left by ``W^{-1}``.

    Gives ``A = E/(1+nu) W^{-1}``, ``B = W``, ``C = nu E/((1+nu)(1-2nu)) W^{-1}``
    and right-hand side ``W^{-1} D``.
    """
    cf = _spd_factor(W, "W")
    W = as_mat(W, "W")
    D = as_mat(D, "D")
    n = W.shape[0]
    Winv = sla.cho_solve(cf, np.eye(n))
    Winv = 0.5 * (Winv + Winv.T)
    return QuasiLinearProblem(
        el.shear2 * Winv, W, [(el.lame * Winv, LinearTrace(Identity()))], sla.cho_solve(cf, D)
    )


@dataclass(frozen=True)
class AHOFrame:
    S: np.ndarray
    Y: np.ndarray


@dataclass(frozen=True)
class NTFrame:
    W: np.ndarray


@dataclass(frozen=True)
class ReducedProblem:
    """``X = M + sum_i trace(H_i X) N_i``."""

    M: np.ndarray
    N_list: list
    functionals: list

    def solve(self) -> linearf.LinearOutcome:
        return linearf.solve_reduced(self.M, self.N_list, self.functionals)


def build_ti_problem(terms: ElasticityTI, frame, D):
    """Step equation for a map ``C(X) = sum_i trace(H_i X) K_i``.

    AHO frame: ``S X + X S + sum_i trace(H_i X)(K_i Y + Y K_i) = D`` as a
    multi-term problem. NT frame: the reduced form with ``M = W^{-1} D W^{-1}``
    and ``N_i = -W^{-1} K_i W^{-1}``.
    """
    D = as_mat(D, "D")
    n = terms.n
    if D.shape != (n, n):
        raise DimensionMismatch(f"D must be {n}x{n}")
    fs = [LinearTrace(Dense(H)) for H, _ in terms.terms]
    if isinstance(frame, AHOFrame):
        S = _require_spd(frame.S, "S")
        Y = _require_spd(frame.Y, "Y")
        Cs = [K @ Y + Y @ K for _, K in terms.terms]
        return QuasiLinearProblem(S, S, list(zip(Cs, fs)), D)
    if isinstance(frame, NTFrame):
        cf = _spd_factor(frame.W, "W")
        Winv = sla.cho_solve(cf, np.eye(n))
        Winv = 0.5 * (Winv + Winv.T)
        M = Winv @ D @ Winv
        Ns = [-(Winv @ K @ Winv) for _, K in terms.terms]
        return ReducedProblem(M, Ns, fs)
    raise TypeError(f"unknown frame {frame!r}")


def nt_scaling(Y, S) -> np.ndarray:
    """Geometric mean ``W`` of ``Y^{-1}`` and ``S``; it satisfies ``W Y W = S``.

    ``W = Y^{-1/2} (Y^{1/2} S Y^{1/2})^{1/2} Y^{-1/2}``.
    """
    Yh = mat_sqrt(_require_spd(Y, "Y"))
    _require_spd(S, "S")
    P = mat_sqrt(0.5 * ((Yh @ S @ Yh) + (Yh @ S @ Yh).T))
    Yh_inv = np.linalg.inv(Yh)
    W = Yh_inv @ P @ Yh_inv
    return 0.5 * (W + W.T)


@dataclass
class DemoStep:
    Y: np.ndarray
    S: np.ndarray
    mu: float
    step_residual: float
    tau: float
    X: np.ndarray


def _min_eig(X) -> float:
    return float(np.linalg.eigvalsh(0.5 * (X + X.T))[0])


def _boundary_step(Z, dZ) -> float:
    """Largest ``t <= 1`` with ``Z + t dZ`` positive definite, scaled by the fraction to the boundary."""
    L = np.linalg.cholesky(Z)
    Linv = np.linalg.inv(L)
    lam_min = _min_eig(Linv @ dZ @ Linv.T)
    if lam_min >= 0:
        return 1.0
    return min(1.0, FRACTION_TO_BOUNDARY * (-1.0 / lam_min))


def projection_demo(
    Ybar,
    el: ElasticityIso,
    scheme: str = "AHO",
    steps: int = 10,
    mu0: float = 1.0,
    mu_factor: float = 0.5,
) -> list:
    """A short primal-dual loop driving the step equations.

    Starts from ``Y = S = I``. Each step solves the AHO or NT equation for
    the Newton step ``X`` of ``Y``, takes ``dS = C(Y + X + Ybar) - S`` from
    the linearized stationarity condition, and moves both by a common
    step ``tau`` that keeps ``Y`` and ``S`` positive definite. No claim of
    convergence is made; each record carries the step-equation residual.
    """
    scheme = scheme.upper()
    if scheme not in ("AHO", "NT"):
        raise ValueError("scheme must be 'AHO' or 'NT'")
    if not 1 <= steps <= 50:
        raise ValueError("steps must lie in 1..50")
    Ybar = as_mat(Ybar, "Ybar")
    n = Ybar.shape[0]
    Y = np.eye(n)
    S = np.eye(n)
    mu = float(mu0)
    out = []
    for _ in range(steps):
        if scheme == "AHO":
            prob = build_aho_iso(S, Y, Ybar, el, mu)
            sol = linearf.solve_single(prob)
            if not sol.unique:
                raise StepFailure(f"step equation has {sol.kind.value} outcome")
            X = sol.X
            D_src = prob.D
            res = aho_source_residual(S, Y, el, X, D_src)
        else:
            W = nt_scaling(Y, S)
            D_src = mu * np.linalg.inv(Y) - el(Y + Ybar)
            D_src = 0.5 * (D_src + D_src.T)
            prob = build_nt_iso(W, D_src, el)
            sol = linearf.solve_single(prob)
            if not sol.unique:
                raise StepFailure(f"step equation has {sol.kind.value} outcome")
            X = sol.X
            res = nt_source_residual(W, el, X, D_src)
        X = 0.5 * (X + X.T)
        dS = el(Y + X + Ybar) - S
        tau = min(_boundary_step(Y, X), _boundary_step(S, dS))
        for _ in range(MAX_HALVINGS):
            Y_new, S_new = Y + tau * X, S + tau * dS
            if _min_eig(Y_new) > 0 and _min_eig(S_new) > 0:
                break
            tau *= 0.5
        else:
            raise StepFailure("backtracking could not keep Y and S positive definite")
        Y, S = 0.5 * (Y_new + Y_new.T), 0.5 * (S_new + S_new.T)
        out.append(DemoStep(Y=Y, S=S, mu=mu, step_residual=res, tau=tau, X=X))
        mu *= mu_factor
    return out


def trajectory_csv(traj: Sequence[DemoStep]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "mu", "tau", "step_residual", "min_eig_Y", "min_eig_S", "trace_Y"])
    for k, st in enumerate(traj, start=1):
        w.writerow([k, repr(st.mu), repr(st.tau), repr(st.step_residual),
                    repr(_min_eig(st.Y)), repr(_min_eig(st.S)), repr(float(np.trace(st.Y)))])
    return buf.getvalue()
