"""Solvers for ``f(X) = g(h(X))`` with ``h`` linear and ``g`` scalar.

Applying ``h`` to ``X = M + g(h(X)) N`` gives the scalar equation
``F(y) = gamma1 + g(y) gamma2 - y = 0`` with ``gamma1 = h(M)``,
``gamma2 = h(N)``. A root ``y*`` yields ``X = M + g(y*) N``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DerivativeVanishes, DomainExit, NoConvergence, VerificationFailed
from .matcore import HSpec, Identity, as_mat, trace_functional

__all__ = [
    "ScalarFn",
    "Method",
    "ScalarSolveReport",
    "reduce",
    "newton_solve",
    "fixed_point_solve",
    "assemble",
    "enumerate_roots",
]

TOL_SCALAR = 1e-12
BRACKET_CAP = 1e8


@dataclass(frozen=True)
class ScalarFn:
    """Scalar function ``g`` with first (and optionally second) derivative.

    ``interval`` is the closed or open validity domain ``(lo, hi)``; the
    ``open_lo`` flag excludes the left endpoint (``ln`` at 0).
    """

    kind: str
    value: Callable[[float], float]
    deriv: Callable[[float], float]
    second: Callable[[float], float] | None = None
    interval: tuple = (-math.inf, math.inf)
    open_lo: bool = False

    @classmethod
    def exp_neg(cls) -> "ScalarFn":
        return cls(
            "exp_neg",
            value=lambda y: math.exp(-y),
            deriv=lambda y: -math.exp(-y),
            second=lambda y: math.exp(-y),
        )

    @classmethod
    def log(cls) -> "ScalarFn":
        return cls(
            "log",
            value=math.log,
            deriv=lambda y: 1.0 / y,
            second=lambda y: -1.0 / (y * y),
            interval=(0.0, math.inf),
            open_lo=True,
        )

    @classmethod
    def custom(cls, value, deriv, interval=(-math.inf, math.inf), second=None) -> "ScalarFn":
        return cls("custom", value=value, deriv=deriv, second=second, interval=tuple(interval))

    @classmethod
    def from_name(cls, name: str) -> "ScalarFn":
        try:
            return {"exp_neg": cls.exp_neg, "log": cls.log}[name]()
        except KeyError:
            raise ValueError(f"unknown scalar function {name!r}") from None

    def contains(self, y: float) -> bool:
        lo, hi = self.interval
        if not math.isfinite(y):
            return False
        if self.open_lo:
            return lo < y <= hi
        return lo <= y <= hi


class Method(enum.Enum):
    NEWTON = "newton"
    FIXED_POINT = "fixed_point"


@dataclass
class ScalarSolveReport:
    y_star: float
    iterates: list
    method: Method
    ostrowski_value: float
    converged: bool
    residual: float
    hypotheses: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "y_star": self.y_star,
            "iterates": list(map(float, self.iterates)),
            "method": self.method.value,
            "ostrowski_value": self.ostrowski_value,
            "converged": self.converged,
            "residual": self.residual,
            "hypotheses": self.hypotheses,
        }


def reduce(M, N, h: HSpec | None = None) -> tuple[float, float]:
    """``(h(M), h(N))``."""
    h = Identity() if h is None else h
    M = as_mat(M, "M")
    N = as_mat(N, "N")
    return float(trace_functional(h, M)), float(trace_functional(h, N))


def _F(g: ScalarFn, g1: float, g2: float, y: float) -> float:
    return g1 + g.value(y) * g2 - y


def _tol(tol: float, y: float) -> float:
    # an absolute tolerance cannot go below the spacing of doubles near y
    return max(tol, 8 * np.finfo(float).eps * abs(y))


def _bracket(g: ScalarFn, g1: float, g2: float, a: float) -> tuple[float, float] | None:
    """Expand ``[a, a + w]`` by doubling ``w`` until ``F`` changes sign."""
    if not g.contains(a):
        return None
    fa = _F(g, g1, g2, a)
    w = 1.0
    while a + w <= BRACKET_CAP:
        b = a + w
        if g.contains(b):
            fb = _F(g, g1, g2, b)
            if fa == 0.0 or np.sign(fb) != np.sign(fa):
                return a, b
        w *= 2.0
    return None


def _check_newton_hypotheses(g, g1, g2, bracket, samples: int = 33) -> dict:
    """Sample ``F' < 0`` and ``F'' > 0`` on the bracket."""
    out = {"bracket": list(bracket) if bracket else None}
    if bracket is None:
        out.update(decreasing=None, convex=None)
        return out
    ys = np.linspace(bracket[0], bracket[1], samples)
    ys = [y for y in ys if g.contains(y)]
    out["decreasing"] = all(g.deriv(y) * g2 - 1.0 < 0 for y in ys)
    out["convex"] = None if g.second is None else all(g.second(y) * g2 > 0 for y in ys)
    return out


def newton_solve(
    g: ScalarFn,
    gamma1: float,
    gamma2: float,
    y0: float = 0.0,
    tol: float = TOL_SCALAR,
    max_iter: int = 100,
) -> ScalarSolveReport:
    """Newton's method on ``F(y) = gamma1 + g(y) gamma2 - y``.

    A step that leaves the domain of ``g`` is halved until it lands inside.
    Before iterating, ``[y0, b]`` is expanded by doubling until ``F`` changes
    sign; on that bracket ``F' < 0`` and ``F'' > 0`` are sampled and reported
    in ``hypotheses`` (the conditions under which convergence from any
    ``y0 >= 0`` is guaranteed).
    """
    bracket = _bracket(g, gamma1, gamma2, y0)
    hypotheses = _check_newton_hypotheses(g, gamma1, gamma2, bracket)
    y = float(y0)
    if not g.contains(y):
        raise DomainExit(f"starting point {y} outside the domain of g")
    iterates = [y]
    for _ in range(max_iter):
        Fy = _F(g, gamma1, gamma2, y)
        dF = g.deriv(y) * gamma2 - 1.0
        if abs(dF) <= 1e-14:
            raise DerivativeVanishes(f"F'({y}) = {dF}")
        step = -Fy / dF
        y_new = y + step
        halvings = 0
        while not g.contains(y_new):
            halvings += 1
            if halvings > 60:
                raise DomainExit("cannot keep the Newton iterate inside the domain of g")
            step *= 0.5
            y_new = y + step
        y = y_new
        iterates.append(y)
        res = abs(_F(g, gamma1, gamma2, y))
        if res <= _tol(tol, y):
            return ScalarSolveReport(
                y_star=y, iterates=iterates, method=Method.NEWTON,
                ostrowski_value=abs(g.deriv(y) * gamma2), converged=True,
                residual=res, hypotheses=hypotheses,
            )
    raise NoConvergence(f"Newton did not converge in {max_iter} iterations (last y = {y})")


def fixed_point_solve(
    g: ScalarFn,
    gamma1: float,
    gamma2: float,
    y0: float = 0.0,
    tol: float = TOL_SCALAR,
    max_iter: int = 1000,
) -> ScalarSolveReport:
    """Iterate ``y <- gamma1 + g(y) gamma2``.

    Local convergence needs ``|g'(y*) gamma2| < 1``; the value is reported
    as ``ostrowski_value`` together with a flag when it is violated.
    """
    y = float(y0)
    if not g.contains(y):
        raise DomainExit(f"starting point {y} outside the domain of g")
    iterates = [y]
    for _ in range(max_iter):
        y = gamma1 + g.value(y) * gamma2
        if not g.contains(y):
            raise DomainExit(f"fixed-point iterate {y} left the domain of g")
        iterates.append(y)
        res = abs(_F(g, gamma1, gamma2, y))
        if res <= _tol(tol, y):
            ost = abs(g.deriv(y) * gamma2)
            return ScalarSolveReport(
                y_star=y, iterates=iterates, method=Method.FIXED_POINT,
                ostrowski_value=ost, converged=True, residual=res,
                hypotheses={"ostrowski_violated": ost >= 1.0},
            )
    raise NoConvergence(f"fixed point did not converge in {max_iter} iterations (last y = {y})")


def assemble(M, N, g: ScalarFn, y_star: float, h: HSpec | None = None, tol: float = TOL_SCALAR):
    """``X = M + g(y*) N``, verified by ``h(X) = y*`` and the matrix equation."""
    h = Identity() if h is None else h
    M = as_mat(M, "M")
    N = as_mat(N, "N")
    if not g.contains(y_star):
        raise VerificationFailed(f"y* = {y_star} outside the domain of g")
    X = M + g.value(y_star) * N
    hx = trace_functional(h, X)
    scale = max(1.0, abs(y_star))
    if abs(hx - y_star) > tol * scale * 10:
        raise VerificationFailed(f"h(X) = {hx!r} differs from y* = {y_star!r}")
    eq = np.linalg.norm(X - M - g.value(hx) * N)
    if eq > 1e-10 * (np.linalg.norm(M) + abs(g.value(y_star)) * np.linalg.norm(N) + 1e-300):
        raise VerificationFailed(f"matrix equation residual {eq:.3e}")
    return X


def enumerate_roots(
    g: ScalarFn, gamma1: float, gamma2: float, lo: float, hi: float, points: int = 2001
) -> list[float]:
    """All sign-change roots of ``F`` on a uniform grid over ``[lo, hi]``, refined by bisection."""
    from scipy.optimize import brentq

    ys = [y for y in np.linspace(lo, hi, points) if g.contains(y)]
    vals = [_F(g, gamma1, gamma2, y) for y in ys]
    roots = []
    for (a, fa), (b, fb) in zip(zip(ys, vals), zip(ys[1:], vals[1:])):
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(lambda y: _F(g, gamma1, gamma2, y), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    if vals and vals[-1] == 0.0:
        roots.append(ys[-1])
    return roots
