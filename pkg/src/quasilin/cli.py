"""Command-line front end.

    quasilin solve problem.json --out DIR
    quasilin table1 [--sigma S ...] [--seed N]
    quasilin fig1 --psi {sqrt,exp_neg} [--out DIR]
    quasilin ex31
    quasilin roots --g exp_neg --gamma1 0 --gamma2 1 --lo 0 --hi 5
    quasilin demo --ybar Ybar.mtx --E 1 --nu 0.3 --scheme AHO

Exit codes: 0 verified solve, 1 input error, 2 no solution / no convergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import experiments, fixpoint, linearf, mech, polyf, scalarnl
from .errors import (
    DerivativeVanishes,
    DomainExit,
    InputError,
    NoConvergence,
    NoRealSolution,
    QuasiLinError,
)
from .matcore import Dense, Identity, RankOne, solve_sylvester
from .mmio import read_matrix, write_matrix, write_text_atomic
from .problem import LinearTrace, PsiKind, QuasiLinearProblem

log = logging.getLogger("quasilin")

EXIT_OK, EXIT_INPUT, EXIT_NOSOL = 0, 1, 2
SEED_ENV = "QUASILIN_SEED"

_H_SCHEMA = {
    "oneOf": [
        {"enum": ["identity"]},
        {"type": "object", "required": ["dense"], "properties": {"dense": {"type": "string"}},
         "additionalProperties": False},
        {"type": "object", "required": ["rank_one"], "additionalProperties": False,
         "properties": {"rank_one": {"type": "object", "required": ["u", "v"],
                                     "properties": {"u": {"type": "string"}, "v": {"type": "string"}}}}},
    ]
}

_FUNCTIONAL_SCHEMA = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["linear", "power_trace", "inverse_trace", "frobenius", "trace_psi", "g_of_trace"]},
        "H": _H_SCHEMA,
        "p": {"type": "integer", "minimum": 2, "maximum": 12},
        "psi": {"enum": ["exp_neg", "sqrt"]},
        "g": {"enum": ["exp_neg", "log"]},
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "power_trace"}}}, "then": {"required": ["p"]}},
        {"if": {"properties": {"kind": {"const": "trace_psi"}}}, "then": {"required": ["psi"]}},
        {"if": {"properties": {"kind": {"const": "g_of_trace"}}}, "then": {"required": ["g"]}},
    ],
}

PROBLEM_SCHEMA = {
    "type": "object",
    "properties": {
        "functional": _FUNCTIONAL_SCHEMA,
        "A": {"type": "string"},
        "B": {"type": "string"},
        "C": {"type": "string"},
        "D": {"type": "string"},
        "M": {"type": "string"},
        "N": {"type": "string"},
        "m1": {"type": "string"},
        "m2": {"type": "string"},
        "n1": {"type": "string"},
        "n2": {"type": "string"},
        "terms": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "object", "required": ["C", "functional"],
                      "properties": {"C": {"type": "string"}, "functional": _FUNCTIONAL_SCHEMA}},
        },
        "options": {
            "type": "object",
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "mode": {"enum": ["diag", "direct"]},
                "method": {"enum": ["newton", "fixed_point"]},
                "y0": {"type": "number"},
            },
        },
    },
    "oneOf": [
        {"required": ["A", "B", "D", "functional", "C"]},
        {"required": ["A", "B", "D", "terms"]},
        {"required": ["functional", "M", "N"]},
        {"required": ["functional", "m1", "m2", "N"]},
        {"required": ["functional", "M", "n1", "n2"]},
    ],
}


class _Loaded:
    """Problem file with every referenced matrix read and checked."""

    def __init__(self, path: Path):
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot parse {path}: {exc}") from exc
        try:
            jsonschema.validate(doc, PROBLEM_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise InputError(f"invalid problem file: {exc.message}") from exc
        self.doc = doc
        self.base = path.parent
        self.options = doc.get("options", {})
        self.mats = {}
        for key in ("A", "B", "C", "D", "M", "N", "m1", "m2", "n1", "n2"):
            if key in doc:
                self.mats[key] = self._read(doc[key])
        self.terms = None
        if "terms" in doc:
            self.terms = [(self._read(t["C"]), self._functional(t["functional"])) for t in doc["terms"]]
            if not all(isinstance(f, LinearTrace) for _, f in self.terms):
                raise InputError("multi-term problems require linear functionals")
        self.functional = doc.get("functional")
        self.f = self._functional(self.functional) if self.functional else None

    def _read(self, rel: str) -> np.ndarray:
        p = Path(rel)
        if not p.is_absolute():
            p = self.base / p
        if not p.exists():
            raise InputError(f"referenced file {p} does not exist")
        return read_matrix(p)

    def _h(self, spec):
        if spec is None or spec == "identity":
            return Identity()
        if "dense" in spec:
            return Dense(self._read(spec["dense"]))
        r1 = spec["rank_one"]
        return RankOne(self._read(r1["u"]).ravel(), self._read(r1["v"]).ravel())

    def _functional(self, spec):
        kind = spec["kind"]
        if kind == "linear":
            return LinearTrace(self._h(spec.get("H")))
        if kind == "g_of_trace":
            return ("g_of_trace", scalarnl.ScalarFn.from_name(spec["g"]), self._h(spec.get("H")))
        return (kind, spec)

    @property
    def full_form(self) -> bool:
        return "A" in self.mats

    def problem(self) -> QuasiLinearProblem:
        m = self.mats
        if self.terms is not None:
            return QuasiLinearProblem(m["A"], m["B"], self.terms, m["D"])
        f = self.f if isinstance(self.f, LinearTrace) else LinearTrace(Identity())
        return QuasiLinearProblem(m["A"], m["B"], [(m["C"], f)], m["D"])

    def reduced(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.mats
        if self.full_form:
            A, B = m["A"], m["B"]
            return solve_sylvester(A, B, m["D"]), -solve_sylvester(A, B, m["C"])
        return m["M"], m["N"]


def _equation_residual(loaded: _Loaded, X: np.ndarray, fX, M=None, N=None) -> dict:
    """Residual of the original equation at ``X`` given ``f(X)``."""
    if loaded.full_form:
        m = loaded.mats
        R = m["A"] @ X + X @ m["B"] + fX * m["C"] - m["D"]
        return {"kind": "full", "value": float(np.linalg.norm(R))}
    R = X - M - fX * N
    return {"kind": "reduced", "value": float(np.linalg.norm(R))}


def _write_solution(out: Path, name: str, X: np.ndarray) -> list:
    if np.iscomplexobj(X):
        write_matrix(out / f"{name}_re.mtx", X.real, symmetric=False)
        write_matrix(out / f"{name}_im.mtx", X.imag, symmetric=False)
        return [f"{name}_re.mtx", f"{name}_im.mtx"]
    write_matrix(out / f"{name}.mtx", X, symmetric=False)
    return [f"{name}.mtx"]


def _root_json(r) -> object:
    r = complex(r)
    return r.real if r.imag == 0 else [r.real, r.imag]


def _solve_linear(loaded: _Loaded, out: Path) -> tuple[int, dict]:
    prob = loaded.problem()
    res = linearf.solve_multi(prob) if len(prob.terms) > 1 else linearf.solve_single(prob)
    report = {"solver": "linear", "outcome": res.kind.value, "diagnostics": _jsonable(res.diagnostics)}
    if res.kind is linearf.Outcome.UNIQUE:
        report["sigma"] = res.sigma.tolist()
        report["files"] = _write_solution(out, "X", res.X)
        R = prob.residual(res.X)
        report["residual"] = {"kind": "full", "value": float(np.linalg.norm(R))}
        report["relative_residual"] = prob.relative_residual(res.X)
        return EXIT_OK, report
    if res.kind is linearf.Outcome.NON_UNIQUE:
        files = _write_solution(out, "M_family", res.M)
        for k, Nk in enumerate(res.N_list, start=1):
            files += _write_solution(out, f"N_family_{k}", Nk)
        report["files"] = files
        return EXIT_OK, report
    return EXIT_NOSOL, report


def _solve_poly(loaded: _Loaded, out: Path, kind: str) -> tuple[int, dict]:
    spec = loaded.functional
    m = loaded.mats
    M = N = None
    if kind == "inverse_trace":
        if "m1" in m:
            sols = polyf.solve_trace_inverse_rank1M(m["m1"], m["m2"], m["N"])
            M, N = np.outer(m["m1"], m["m2"]), m["N"]
        elif "n1" in m:
            sols = polyf.solve_trace_inverse_rank1N(m["M"], m["n1"], m["n2"])
            M, N = m["M"], np.outer(m["n1"], m["n2"])
        else:
            M, N = loaded.reduced()
            sols = _inverse_trace_from_matrices(M, N)
        f = lambda X: np.trace(np.linalg.inv(X))
    else:
        M, N = loaded.reduced()
        if kind == "power_trace":
            p = spec["p"]
            sols = polyf.solve_trace_power2(M, N) if p == 2 else polyf.solve_trace_power_general(M, N, p)
            f = lambda X: np.trace(np.linalg.matrix_power(X, p))
        else:
            sols = polyf.solve_frobenius(M, N)
            f = lambda X: np.sum(X * X)
    entries = []
    for i, e in enumerate(sols.entries, start=1):
        files = _write_solution(out, f"X_{i}", e.X)
        item = {"root": _root_json(e.root), "f_residual": e.f_residual, "eq_residual": e.eq_residual,
                "files": files}
        if e.is_real:
            item["residual"] = _equation_residual(loaded, e.X, float(f(e.X)), M, N)
        entries.append(item)
    report = {
        "solver": kind,
        "degree": sols.degree,
        "coefficients": None if sols.coefficients is None else list(map(float, sols.coefficients)),
        "solutions": entries,
        "spurious": [{"root": _root_json(s.root), "reason": s.reason} for s in sols.spurious],
    }
    return (EXIT_OK if entries else EXIT_NOSOL), report


def _rank_one_factors(X: np.ndarray):
    U, s, Vt = np.linalg.svd(X)
    if s.size > 1 and s[1] > 1e-12 * s[0]:
        return None
    return U[:, 0] * s[0], Vt[0]


def _inverse_trace_from_matrices(M, N):
    fm = _rank_one_factors(M)
    if fm is not None:
        return polyf.solve_trace_inverse_rank1M(fm[0], fm[1], N)
    fn = _rank_one_factors(N)
    if fn is not None:
        return polyf.solve_trace_inverse_rank1N(M, fn[0], fn[1])
    raise InputError("trace(X^-1) needs a rank-one M or a rank-one N")


def _solve_psi(loaded: _Loaded, out: Path, opts: dict, fmt: str) -> tuple[int, dict]:
    psi = PsiKind(loaded.functional["psi"])
    M, N = loaded.reduced()
    X, rep = fixpoint.iterate(M, N, psi, tol=opts["tol"], max_iter=opts["max_iter"], mode=opts["mode"])
    fX = fixpoint.evaluate_f(psi, X)
    report = {"solver": "trace_psi", "psi": psi.value, **rep.to_dict()}
    sigma, pred = fixpoint.convergence_predicate(X, N, psi)
    report["predicate"] = {"sigma": sigma, "prediction": pred.value}
    if fmt == "csv":
        write_text_atomic(out / "iterations.csv", rep.to_csv())
    if rep.converged:
        report["files"] = _write_solution(out, "X", X)
        report["residual"] = _equation_residual(loaded, X, fX, M, N)
        return EXIT_OK, report
    return EXIT_NOSOL, report


def _solve_g(loaded: _Loaded, out: Path, opts: dict) -> tuple[int, dict]:
    _, g, h = loaded.f
    M, N = loaded.reduced()
    g1, g2 = scalarnl.reduce(M, N, h)
    method = opts.get("method", "newton")
    y0 = opts.get("y0", 1.0 if g.kind == "log" else 0.0)
    solver = scalarnl.newton_solve if method == "newton" else scalarnl.fixed_point_solve
    rep = solver(g, g1, g2, y0=y0)
    X = scalarnl.assemble(M, N, g, rep.y_star, h)
    fX = g.value(float(scalarnl.trace_functional(h, X)))
    report = {"solver": "g_of_trace", "gamma1": g1, "gamma2": g2, **rep.to_dict()}
    report["files"] = _write_solution(out, "X", X)
    report["residual"] = _equation_residual(loaded, X, fX, M, N)
    return EXIT_OK, report


def _jsonable(d: dict) -> dict:
    return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else float(v) if isinstance(v, (np.floating, float)) else v)
            for k, v in d.items()}


def cmd_solve(args) -> int:
    path = Path(args.problem)
    try:
        loaded = _Loaded(path)
    except QuasiLinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    opts = {
        "tol": loaded.options.get("tol", fixpoint.DEFAULT_TOL),
        "max_iter": loaded.options.get("max_iter", fixpoint.DEFAULT_MAX_ITER),
        "mode": loaded.options.get("mode", "diag"),
        **{k: v for k, v in loaded.options.items() if k in ("method", "y0")},
    }
    for key in ("tol", "max_iter", "mode"):
        val = getattr(args, key, None)
        if val is not None:
            opts[key] = val

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kind = "linear" if loaded.terms is not None else loaded.functional["kind"]
    try:
        if kind == "linear":
            code, report = _solve_linear(loaded, out)
        elif kind in ("power_trace", "frobenius", "inverse_trace"):
            code, report = _solve_poly(loaded, out, kind)
        elif kind == "trace_psi":
            code, report = _solve_psi(loaded, out, opts, args.format)
        else:
            code, report = _solve_g(loaded, out, opts)
    except (NoRealSolution, NoConvergence, DomainExit, DerivativeVanishes) as exc:
        code, report = EXIT_NOSOL, {"solver": kind, "error": type(exc).__name__, "message": str(exc)}
    except QuasiLinError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report["exit_code"] = code
    write_text_atomic(out / "report.json", json.dumps(report, indent=2) + "\n")
    if code != EXIT_OK:
        print(f"no solution: {report.get('message', report.get('outcome', report.get('termination')))}",
              file=sys.stderr)
    return code


def _seed(args) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        return int(env)
    return args.seed


def _emit(text: str, out: str | None, name: str) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    write_text_atomic(d / name, text)


def cmd_table1(args) -> int:
    sigmas = experiments.TABLE1_SIGMAS if args.sigma is None else args.sigma
    tol = fixpoint.DEFAULT_TOL if args.tol is None else args.tol
    cap = fixpoint.DEFAULT_MAX_ITER if args.max_iter is None else args.max_iter
    rows = experiments.table1_rows(sigmas, n=args.n, seed=_seed(args), tol=tol, max_iter=cap,
                                   mode=args.mode or "diag")
    if args.format == "json":
        _emit(json.dumps(rows, indent=2) + "\n", args.out, "table1.json")
    else:
        _emit(experiments.table1_csv(rows), args.out, "table1.csv")
    return EXIT_OK


def cmd_fig1(args) -> int:
    tol = 1e-13 if args.tol is None else args.tol
    cap = fixpoint.DEFAULT_MAX_ITER if args.max_iter is None else args.max_iter
    values, rep = experiments.fig1_trajectory(args.psi, n=args.n, seed=_seed(args), tol=tol, max_iter=cap,
                                              zero_n=args.zero_n, mode=args.mode or "diag")
    if args.format == "json":
        text = json.dumps({"psi": args.psi, "diag_values": values, **rep.to_dict()}, indent=2) + "\n"
        _emit(text, args.out, f"fig1_{args.psi}.json")
    else:
        _emit(experiments.fig1_csv(values, rep), args.out, f"fig1_{args.psi}.csv")
    return EXIT_OK


def cmd_ex31(args) -> int:
    res = experiments.example31_residuals(n=args.n, seed_m=args.seed_m, seed_n=args.seed_n)
    if args.format == "json":
        doc = {k: {"roots": [_root_json(r) for r in v["roots"]], "f_residuals": v["f_residuals"],
                   "spurious": [{"root": _root_json(r), "reason": why} for r, why in v["spurious"]]}
               for k, v in res.items()}
        _emit(json.dumps(doc, indent=2) + "\n", args.out, "ex31.json")
        return EXIT_OK
    lines = ["case,root_re,root_im,f_residual"]
    for k, v in res.items():
        for r, fr in zip(v["roots"], v["f_residuals"]):
            lines.append(f"{k},{r.real!r},{r.imag!r},{fr!r}")
    _emit("\n".join(lines) + "\n", args.out, "ex31.csv")
    return EXIT_OK


def cmd_roots(args) -> int:
    g = scalarnl.ScalarFn.from_name(args.g)
    roots = scalarnl.enumerate_roots(g, args.gamma1, args.gamma2, args.lo, args.hi, args.points)
    sys.stdout.write(json.dumps({"roots": roots}) + "\n")
    return EXIT_OK if roots else EXIT_NOSOL


def cmd_demo(args) -> int:
    try:
        Ybar = read_matrix(args.ybar)
        el = mech.ElasticityIso(args.E, args.nu)
        traj = mech.projection_demo(Ybar, el, args.scheme, args.steps, args.mu0, args.mu_factor)
    except QuasiLinError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _emit(mech.trajectory_csv(traj), args.out, "demo.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasilin", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=False):
        sp.add_argument("--tol", type=float)
        sp.add_argument("--max-iter", dest="max_iter", type=int)
        sp.add_argument("--mode", choices=["diag", "direct"])
        sp.add_argument("--out", required=out_required, default=None)
        sp.add_argument("--format", choices=["json", "csv"])
        sp.add_argument("--seed", type=int, default=1)

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem")
    common(s, out_required=True)
    s.set_defaults(func=cmd_solve, format="json")

    t = sub.add_parser("table1", help="contraction-factor sweep for trace(exp(-X))")
    t.add_argument("--sigma", type=float, nargs="*", default=None)
    t.add_argument("--n", type=int, default=10)
    common(t)
    t.set_defaults(func=cmd_table1, format="csv")

    f = sub.add_parser("fig1", help="diagonal trajectory of the fixed-point iteration")
    f.add_argument("--psi", choices=["sqrt", "exp_neg"], required=True)
    f.add_argument("--n", type=int, default=10)
    f.add_argument("--zero-n", action="store_true", help="use N = 0")
    common(f)
    f.set_defaults(func=cmd_fig1, format="csv")

    e = sub.add_parser("ex31", help="verification residuals of the rank-one trace(X^-1) solvers")
    e.add_argument("--n", type=int, default=10)
    e.add_argument("--seed-m", dest="seed_m", type=int, default=2)
    e.add_argument("--seed-n", dest="seed_n", type=int, default=1)
    e.add_argument("--out", default=None)
    e.add_argument("--format", choices=["json", "csv"], default="csv")
    e.set_defaults(func=cmd_ex31)

    r = sub.add_parser("roots", help="all sign-change roots of gamma1 + g(y) gamma2 - y on [lo, hi]")
    r.add_argument("--g", choices=["exp_neg", "log"], required=True)
    r.add_argument("--gamma1", type=float, required=True)
    r.add_argument("--gamma2", type=float, required=True)
    r.add_argument("--lo", type=float, required=True)
    r.add_argument("--hi", type=float, required=True)
    r.add_argument("--points", type=int, default=2001)
    r.set_defaults(func=cmd_roots)

    d = sub.add_parser("demo", help="projection demo driving the AHO/NT step equations")
    d.add_argument("--ybar", required=True)
    d.add_argument("--E", type=float, default=1.0)
    d.add_argument("--nu", type=float, default=0.3)
    d.add_argument("--scheme", choices=["AHO", "NT"], default="AHO")
    d.add_argument("--steps", type=int, default=10)
    d.add_argument("--mu0", type=float, default=1.0)
    d.add_argument("--mu-factor", dest="mu_factor", type=float, default=0.5)
    d.add_argument("--out", default=None)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
