"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``; the lines are also
collected into the terminal summary of any run that includes this module.
"""
import csv
import io
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import record, rel_err, spd
from quasilin import experiments, polyf
from quasilin.errors import DerivativeVanishes, DomainExit, NoConvergence, NoRealSolution
from quasilin.fixpoint import (
    Monotonicity,
    PsiKind,
    classify_monotonicity,
    frechet_trace,
    frechet_trace_fd,
    iterate,
)
from quasilin.linearf import Outcome, solve_multi, solve_single, trace_shortcut
from quasilin.matcore import Dense, Identity, RankOne, kron_solve, smw_solve, solve_sylvester, sylvester_residual, vec
from quasilin.mech import (
    AHOFrame,
    ElasticityIso,
    ElasticityTI,
    aho_source_residual,
    build_aho_iso,
    build_nt_iso,
    build_ti_problem,
    nt_source_residual,
    projection_demo,
)
from quasilin.mmio import read_matrix, write_matrix
from quasilin.problem import LinearTrace, QuasiLinearProblem
from quasilin.scalarnl import ScalarFn, assemble, fixed_point_solve, newton_solve, reduce


def check(number, passed, detail):
    record(number, passed, detail)
    assert passed, f"criterion {number}: {detail}"


def rand_op(rng, n):
    return rng.standard_normal((n, n)) + (n + 2) * np.eye(n)


def test_criterion_01_sylvester():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_res, worst_kron, compared = 0.0, 0.0, 0
    for _ in range(100):
        n, m = rng.integers(1, 51, size=2)
        A, B = rand_op(rng, n), rand_op(rng, m)
        D = rng.standard_normal((n, m))
        X = solve_sylvester(A, B, D)
        worst_res = max(worst_res, sylvester_residual(A, B, X, D))
        if n * m <= 400:
            Xk = kron_solve(QuasiLinearProblem(A, B, [], D))
            worst_kron = max(worst_kron, rel_err(X, Xk))
            compared += 1
    elapsed = time.perf_counter() - t0
    ok = worst_res <= 1e-12 and worst_kron <= 1e-10 and elapsed < 10
    check(1, ok, f"max rel residual {worst_res:.2e}, max kron diff {worst_kron:.2e} "
                 f"({compared} compared), {elapsed:.2f} s")


def _singular(rng, n, consistent):
    A, B = rand_op(rng, n), rand_op(rng, n)
    C0 = rng.standard_normal((n, n))
    C = C0 / np.trace(-solve_sylvester(A, B, C0))
    D0 = rng.standard_normal((n, n))
    fM0 = np.trace(solve_sylvester(A, B, D0))
    return QuasiLinearProblem(A, B, [(C, LinearTrace())], D0 + fM0 * C if consistent else D0)


def test_criterion_02_single_term():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 31))
        A, B = rand_op(rng, n), rand_op(rng, n)
        C = rng.standard_normal((n, n))
        X_star = rng.standard_normal((n, n))
        kind = rng.integers(3)
        h = [Identity(), RankOne(rng.standard_normal(n), rng.standard_normal(n)),
             Dense(rng.standard_normal((n, n)))][kind]
        f = LinearTrace(h)
        D = A @ X_star + X_star @ B + f(X_star) * C
        worst = max(worst, rel_err(solve_single(QuasiLinearProblem(A, B, [(C, f)], D)).X, X_star))
    fam = sum(solve_single(_singular(rng, int(rng.integers(2, 8)), True)).kind is Outcome.NON_UNIQUE
              for _ in range(20))
    nos = sum(solve_single(_singular(rng, int(rng.integers(2, 8)), False)).kind is Outcome.NO_SOLUTION
              for _ in range(20))
    check(2, worst <= 1e-10 and fam == 20 and nos == 20,
          f"max rel error {worst:.2e}; family {fam}/20, no-solution {nos}/20")


def test_criterion_03_smw():
    rng = np.random.default_rng(303)
    worst_x = worst_s = 0.0
    for _ in range(50):
        n, m = rng.integers(1, 13, size=2)
        A, B = rand_op(rng, n), rand_op(rng, m)
        C, D = rng.standard_normal((n, m)), rng.standard_normal((n, m))
        u, v = rng.standard_normal(m), rng.standard_normal(n)
        f = LinearTrace(RankOne(u, v))
        out = solve_single(QuasiLinearProblem(A, B, [(C, f)], D))
        # trace(u v^T X) = vec(v u^T)^T vec(X)
        X, sigma = smw_solve(A, B, vec(np.outer(v, u)), vec(C), D)
        worst_x = max(worst_x, rel_err(out.X, X))
        worst_s = max(worst_s, abs(out.sigma[0] - sigma) / max(1.0, abs(sigma)))
    check(3, worst_x <= 1e-10 and worst_s <= 1e-10, f"max X diff {worst_x:.2e}, max sigma diff {worst_s:.2e}")


def test_criterion_04_multi_term():
    rng = np.random.default_rng(404)
    worst_rec = worst_kron = 0.0
    for ell in (2, 3, 5):
        for _ in range(10):
            n, m = rng.integers(2, 9, size=2)
            A, B = rand_op(rng, n), rand_op(rng, m)
            X_star = rng.standard_normal((n, m))
            terms = [(rng.standard_normal((n, m)), LinearTrace(Dense(rng.standard_normal((m, n)))))
                     for _ in range(ell)]
            D = A @ X_star + X_star @ B + sum(f(X_star) * C for C, f in terms)
            prob = QuasiLinearProblem(A, B, terms, D)
            X = solve_multi(prob).X
            worst_rec = max(worst_rec, rel_err(X, X_star))
            worst_kron = max(worst_kron, rel_err(X, kron_solve(prob)))
    check(4, worst_rec <= 1e-9 and worst_kron <= 1e-9,
          f"max recovery error {worst_rec:.2e}, max kron diff {worst_kron:.2e}")


def test_criterion_05_trace_shortcut():
    rng = np.random.default_rng(505)
    worst_full = worst_low = 0.0
    for _ in range(50):
        n, k = int(rng.integers(2, 16)), int(rng.integers(1, 3))
        A = spd(rng, n)
        C1, C2 = rng.standard_normal((n, k)), rng.standard_normal((n, k))
        C = C1 @ C2.T
        D = rng.standard_normal((n, n))
        X = solve_single(QuasiLinearProblem(A, A, [(C, LinearTrace())], D)).X
        t = trace_shortcut(A, D, C)
        worst_full = max(worst_full, abs(t - np.trace(X)) / max(1.0, abs(np.trace(X))))
        worst_low = max(worst_low, abs(trace_shortcut(A, D, C_factors=(C1, C2)) - t) / max(1.0, abs(t)))
    check(5, worst_full <= 1e-11 and worst_low <= 1e-12,
          f"max shortcut vs full {worst_full:.2e}, max low-rank vs dense {worst_low:.2e}")


def test_criterion_06_polynomial():
    rng = np.random.default_rng(606)
    worst_f = worst_eq = 0.0
    accepted = 0
    cases = []
    for _ in range(20):
        M, N = rng.standard_normal((5, 5)), 0.1 * rng.standard_normal((5, 5))
        cases.append((polyf.solve_trace_power2(M, N), M, N, lambda X: np.trace(X @ X)))
        cases.append((polyf.solve_trace_power_general(M, N, 3), M, N,
                      lambda X: np.trace(np.linalg.matrix_power(X, 3))))
        try:
            cases.append((polyf.solve_frobenius(M, N), M, N, lambda X: np.sum(X * X)))
        except NoRealSolution:
            pass
    for sols, M, N, f in cases:
        scale = np.linalg.norm(M) + np.linalg.norm(N)
        for e in sols.entries:
            fx = f(e.X)
            worst_f = max(worst_f, abs(fx - e.root) / (1 + abs(e.root)))
            worst_eq = max(worst_eq, np.linalg.norm(e.X - M - fx * N) / scale)
            accepted += 1
    worst_ex = 0.0
    for seed in range(5):
        res = experiments.example31_residuals(seed_m=seed, seed_n=seed)
        worst_ex = max(worst_ex, *(max(v["f_residuals"]) for v in res.values()))
    golden = sorted([(-1 + math.sqrt(5)) / 2, (-1 - math.sqrt(5)) / 2])
    g1 = sorted(e.root for e in polyf.solve_trace_inverse_rank1M([1.0], [1.0], [[1.0]]).entries)
    g2 = sorted(e.root for e in polyf.solve_trace_inverse_rank1N([[1.0]], [1.0], [1.0]).entries)
    worst_g = max(abs(a - b) for a, b in zip(g1 + g2, golden + golden))
    ok = worst_f <= 1e-8 and worst_eq <= 1e-9 and worst_ex <= 1e-12 and worst_g <= 1e-12 and len(g1) == 2
    check(6, ok, f"{accepted} accepted roots: max |f(X)-r| {worst_f:.2e}, max eq residual {worst_eq:.2e}; "
                 f"n=10 rank-one residual {worst_ex:.2e}; golden-ratio error {worst_g:.2e}")


def test_criterion_07_fixed_point_sweep():
    rows = experiments.table1_rows([0.08, 0.33, 0.57, 0.89, 1.3, 1.8], seed=1)
    conv, cap = rows[:4], rows[4:]
    its = [r["iterations"] for r in conv]
    ok_conv = all(r["termination"] == "converged" and r["iterations"] <= 150 for r in conv)
    ok_order = all(a < b for a, b in zip(its, its[1:]))
    ok_cap = all(r["iterations"] == 500 and r["termination"] == "iteration_cap" for r in cap)
    ratio_err = max(abs(r["tail_ratio"] - r["sigma"]) / r["sigma"] for r in conv)
    check(7, ok_conv and ok_order and ok_cap and ratio_err <= 0.2,
          f"iterations {its} (cap rows {[r['iterations'] for r in cap]}), "
          f"max tail-ratio deviation {100 * ratio_err:.1f}%")


def test_criterion_08_monotonicity():
    sqrt_ok = exp_ok = 0
    freeze_ok = True
    for seed in range(20):
        inst = experiments.fig1_instance(PsiKind.SQRT, rng=seed)
        _, rep = iterate(inst.M, inst.N, PsiKind.SQRT, tol=experiments.FIG1_TOL, record_history=True)
        sqrt_ok += classify_monotonicity(rep) is Monotonicity.MONOTONE_INCREASING
        inst = experiments.fig1_instance(PsiKind.EXP_NEG, rng=seed)
        _, rep2 = iterate(inst.M, inst.N, PsiKind.EXP_NEG, tol=experiments.FIG1_TOL, record_history=True)
        exp_ok += classify_monotonicity(rep2) is Monotonicity.ALTERNATING
        for r in (rep, rep2):
            M1 = r.history[0]
            off = ~np.eye(M1.shape[0], dtype=bool)
            freeze_ok &= all(np.array_equal(X1[off], M1[off]) for X1 in r.history)
    check(8, sqrt_ok == 20 and exp_ok == 20 and freeze_ok,
          f"sqrt monotone {sqrt_ok}/20, exp alternating {exp_ok}/20, off-diagonal freeze {'exact' if freeze_ok else 'broken'}")


def test_criterion_09_frechet():
    rng = np.random.default_rng(909)
    worst = {PsiKind.EXP_NEG: 0.0, PsiKind.SQRT: 0.0}
    for _ in range(50):
        n = int(rng.integers(2, 9))
        X = spd(rng, n) / n + 0.5 * np.eye(n)
        E = rng.standard_normal((n, n))
        E = E + E.T
        for psi in worst:
            fd = frechet_trace_fd(psi, X, E)
            worst[psi] = max(worst[psi], abs(abs(frechet_trace(psi, X, E)) - abs(fd)) / abs(fd))
    check(9, max(worst.values()) <= 1e-4,
          f"max relative error exp {worst[PsiKind.EXP_NEG]:.2e}, sqrt {worst[PsiKind.SQRT]:.2e}")


def _bisect(F, a, b):
    for _ in range(200):
        c = 0.5 * (a + b)
        if np.sign(F(c)) == np.sign(F(a)):
            a = c
        else:
            b = c
    return 0.5 * (a + b)


def test_criterion_10_scalar():
    exp = ScalarFn.exp_neg()
    omega = _bisect(lambda y: math.exp(-y) - y, 0.0, 1.0)
    err_omega = abs(newton_solve(exp, 0.0, 1.0).y_star - omega)
    rng = np.random.default_rng(1010)
    both = 0
    worst_agree = worst_h = 0.0
    for _ in range(50):
        g = ScalarFn.from_name(["exp_neg", "log"][rng.integers(2)])
        g1, g2 = rng.uniform(0.1, 4.0), rng.uniform(0.05, 0.9)
        try:
            nt = newton_solve(g, g1, g2, y0=1.0)
            fp = fixed_point_solve(g, g1, g2, y0=1.0)
        except (NoConvergence, DomainExit, DerivativeVanishes):
            continue
        both += 1
        worst_agree = max(worst_agree, abs(nt.y_star - fp.y_star))
        n = 4
        M, N = rng.standard_normal((n, n)), rng.standard_normal((n, n))
        M += (g1 - np.trace(M)) / n * np.eye(n)
        N += (g2 - np.trace(N)) / n * np.eye(n)
        assert reduce(M, N) == pytest.approx((g1, g2), abs=1e-13)
        X = assemble(M, N, g, nt.y_star)
        worst_h = max(worst_h, abs(np.trace(X) - nt.y_star))
    ok = err_omega <= 1e-12 and worst_agree <= 1e-10 and worst_h <= 1e-12 and both >= 40
    check(10, ok, f"omega error {err_omega:.1e}; {both}/50 both converged, max disagreement {worst_agree:.1e}; "
                  f"max |h(X)-y*| {worst_h:.1e}")


def test_criterion_11_builders():
    rng = np.random.default_rng(1111)
    el = ElasticityIso(2.0, 0.3)
    worst_aho = worst_nt = worst_ti = 0.0
    for _ in range(20):
        S, Y = spd(rng, 3), spd(rng, 3)
        G = rng.standard_normal((3, 3))
        Yb, D = G + G.T, G @ G.T
        prob = build_aho_iso(S, Y, Yb, el, 0.5)
        worst_aho = max(worst_aho, aho_source_residual(S, Y, el, solve_single(prob).X, prob.D))
        W = spd(rng, 3)
        worst_nt = max(worst_nt, nt_source_residual(W, el, solve_single(build_nt_iso(W, D, el)).X, D))
        ti = ElasticityTI([((H := rng.standard_normal((3, 3))) + H.T, (K := rng.standard_normal((3, 3))) + K.T)
                           for _ in range(6)])
        S2, Y2 = spd(rng, 3, floor=5.0), spd(rng, 3) / 5
        out = solve_multi(build_ti_problem(ti, AHOFrame(S2, Y2), D))
        worst_ti = max(worst_ti, aho_source_residual(S2, Y2, ti, out.X, D))
    min_eig = min(
        np.linalg.eigvalsh(st.Y)[0]
        for scheme in ("AHO", "NT")
        for seed in range(5)
        for st in projection_demo((lambda G: G + G.T)(np.random.default_rng(seed).standard_normal((3, 3))),
                                  el, scheme, steps=10)
    )
    ok = worst_aho <= 1e-10 and worst_nt <= 1e-10 and worst_ti <= 1e-9 and min_eig > 0
    check(11, ok, f"AHO {worst_aho:.1e}, NT {worst_nt:.1e}, TI(6 terms) {worst_ti:.1e}; "
                  f"demo min eig(Y) {min_eig:.2e}")


def _cli(*args):
    env = dict(os.environ)
    env.pop("QUASILIN_SEED", None)
    out = subprocess.run([sys.executable, "-m", "quasilin", *args], capture_output=True, text=True, env=env,
                         check=True)
    return list(csv.DictReader(io.StringIO(out.stdout)))


def test_criterion_12_cli(tmp_path):
    rng = np.random.default_rng(1212)
    exact = True
    for i in range(25):
        X = rng.standard_normal(tuple(rng.integers(1, 7, size=2))) * 10.0 ** rng.integers(-200, 200)
        write_matrix(tmp_path / f"X{i}.mtx", X)
        exact &= np.array_equal(read_matrix(tmp_path / f"X{i}.mtx").view(np.uint64), X.view(np.uint64))
    rows = _cli("table1", "--sigma", "0.08", "0.33", "0.57", "0.89", "1.3", "1.8")
    its = [int(r["iterations"]) for r in rows]
    res = [float(r["final_residual"]) for r in rows]
    table_ok = (all(k <= 150 and r < 1e-7 for k, r in zip(its[:4], res[:4]))
                and its[:4] == sorted(set(its[:4])) and its[4:] == [500, 500])
    d_sq = _significant_diffs([float(r["diag_value"]) for r in _cli("fig1", "--psi", "sqrt")])
    d_ex = _significant_diffs([float(r["f_value"]) for r in _cli("fig1", "--psi", "exp_neg")])
    mono = d_sq.size >= 3 and bool(np.all(d_sq > 0))
    alt = d_ex.size >= 3 and bool(np.all(np.sign(d_ex[1:]) == -np.sign(d_ex[:-1])))
    check(12, exact and table_ok and mono and alt,
          f"round trip {'bit-exact' if exact else 'LOSSY'}; table1 iterations {its}; "
          f"fig1 sqrt monotone={mono} ({d_sq.size} steps), exp alternating={alt} ({d_ex.size} steps)")


def _significant_diffs(values):
    """Successive differences up to the first one at round-off level."""
    v = np.asarray(values)
    floor = 1e3 * np.finfo(float).eps * np.abs(v).max()
    out = []
    for d in np.diff(v):
        if abs(d) <= floor:
            break
        out.append(d)
    return np.array(out)
