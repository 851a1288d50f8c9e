import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from quasilin import cli
from quasilin.errors import InputError
from quasilin.fixpoint import evaluate_f
from quasilin.mmio import read_matrix, write_matrix


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write_problem(tmp_path, doc, mats):
    for name, X in mats.items():
        write_matrix(tmp_path / f"{name}.mtx", X)
    p = tmp_path / "problem.json"
    p.write_text(json.dumps(doc))
    return p


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


# Matrix Market

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=finite))
@settings(max_examples=60, deadline=None)
def test_mtx_round_trip_bit_exact(tmp_path_factory, X):
    p = tmp_path_factory.mktemp("mm") / "X.mtx"
    write_matrix(p, X)
    Y = read_matrix(p)
    assert Y.shape == X.shape
    assert np.array_equal(Y.view(np.uint64), (X + 0.0).view(np.uint64))


def test_mtx_symmetric_header(tmp_path, rng):
    G = rng.standard_normal((3, 3))
    write_matrix(tmp_path / "S.mtx", G + G.T)
    assert "symmetric" in (tmp_path / "S.mtx").read_text().splitlines()[0]
    np.testing.assert_array_equal(read_matrix(tmp_path / "S.mtx"), G + G.T)


def test_mtx_errors(tmp_path):
    bad = tmp_path / "bad.mtx"
    bad.write_text("not a matrix market file\n")
    with pytest.raises(InputError):
        read_matrix(bad)
    with pytest.raises(InputError):
        read_matrix(tmp_path / "missing.mtx")


# solve

def test_solve_identity_instance(tmp_path, capsys):
    I = np.eye(2)
    p = write_problem(tmp_path, {"A": "A.mtx", "B": "B.mtx", "C": "C.mtx", "D": "D.mtx",
                                 "functional": {"kind": "linear", "H": "identity"}},
                      {"A": I, "B": I, "C": I, "D": I})
    out = tmp_path / "out"
    code, _, _ = run(["solve", str(p), "--out", str(out)], capsys)
    assert code == 0
    np.testing.assert_array_equal(read_matrix(out / "X.mtx"), I / 4)
    rep = json.loads((out / "report.json").read_text())
    assert rep["sigma"] == [0.5]


def test_solve_inverse_rank_one(tmp_path, capsys):
    one = np.ones((1, 1))
    p = write_problem(tmp_path, {"m1": "m1.mtx", "m2": "m2.mtx", "N": "N.mtx",
                                 "functional": {"kind": "inverse_trace"}},
                      {"m1": one, "m2": one, "N": one})
    out = tmp_path / "out"
    code, _, _ = run(["solve", str(p), "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    roots = sorted(s["root"] for s in rep["solutions"])
    np.testing.assert_allclose(roots, sorted([(-1 + 5**0.5) / 2, (-1 - 5**0.5) / 2]), atol=1e-12)
    assert len(rep["spurious"]) == 1 and "zero root" in rep["spurious"][0]["reason"]


def test_malformed_json(tmp_path, capsys):
    p = tmp_path / "problem.json"
    p.write_text("{not json")
    out = tmp_path / "out"
    code, _, err = run(["solve", str(p), "--out", str(out)], capsys)
    assert code == 1 and "error" in err
    assert not out.exists()


@pytest.mark.parametrize("doc", [
    {"functional": {"kind": "linear"}},
    {"M": "M.mtx", "N": "N.mtx", "functional": {"kind": "power_trace"}},
    {"M": "missing.mtx", "N": "N.mtx", "functional": {"kind": "frobenius"}},
])
def test_invalid_problem_files(tmp_path, capsys, doc):
    p = write_problem(tmp_path, doc, {"M": np.eye(2), "N": np.eye(2)})
    out = tmp_path / "out"
    code, _, _ = run(["solve", str(p), "--out", str(out)], capsys)
    assert code == 1 and not out.exists()


def test_no_solution_exit_2(tmp_path, capsys):
    p = write_problem(tmp_path, {"M": "M.mtx", "N": "N.mtx", "functional": {"kind": "frobenius"}},
                      {"M": np.eye(2), "N": np.eye(2)})
    out = tmp_path / "out"
    code, _, _ = run(["solve", str(p), "--out", str(out)], capsys)
    assert code == 2
    assert json.loads((out / "report.json").read_text())["error"] == "NoRealSolution"


def test_linear_no_solution_exit_2(tmp_path, capsys):
    # A = B = I, C = -2 I gives f(N) = trace(I) = 1 for n = 1
    p = write_problem(tmp_path, {"A": "A.mtx", "B": "B.mtx", "C": "C.mtx", "D": "D.mtx",
                                 "functional": {"kind": "linear"}},
                      {"A": np.eye(1), "B": np.eye(1), "C": -2 * np.eye(1), "D": np.eye(1)})
    code, _, _ = run(["solve", str(p), "--out", str(tmp_path / "out")], capsys)
    assert code == 2


def test_cap_exit_2(tmp_path, capsys):
    from quasilin.experiments import table1_instance

    inst = table1_instance(1.789, rng=np.random.default_rng(0))
    p = write_problem(tmp_path, {"M": "M.mtx", "N": "N.mtx",
                                 "functional": {"kind": "trace_psi", "psi": "exp_neg"}},
                      {"M": inst.M, "N": inst.N})
    code, _, _ = run(["solve", str(p), "--out", str(tmp_path / "out"), "--max-iter", "50"], capsys)
    assert code == 2


def _check_residual(out, rep, mats):
    """Recompute the reported residual from the emitted solution files."""
    for item in rep.get("solutions", [rep]):
        if "residual" not in item:
            continue
        X = read_matrix(out / item["files"][0])
        fX = mats["f"](X)
        if item["residual"]["kind"] == "full":
            R = mats["A"] @ X + X @ mats["B"] + fX * mats["C"] - mats["D"]
        else:
            R = X - mats["M"] - fX * mats["N"]
        assert abs(np.linalg.norm(R) - item["residual"]["value"]) <= 1e-12 * max(1.0, np.linalg.norm(X))


@pytest.mark.parametrize("kind", ["linear", "power_trace", "trace_psi", "g_of_trace", "multi"])
def test_reported_residual_reproducible(tmp_path, capsys, rng, kind):
    n = 4
    A = rng.standard_normal((n, n)) + 4 * np.eye(n)
    B = rng.standard_normal((n, n)) + 4 * np.eye(n)
    C = 0.05 * rng.standard_normal((n, n))
    D = rng.standard_normal((n, n))
    if kind == "trace_psi":
        G = rng.standard_normal((n, n))
        X = G @ G.T + 2 * np.eye(n)
        N = 0.01 * np.eye(n)
        mats = {"M": X - evaluate_f("exp_neg", X) * N, "N": N}
        doc = {"M": "M.mtx", "N": "N.mtx", "functional": {"kind": "trace_psi", "psi": "exp_neg"},
               "options": {"tol": 1e-13}}
        mats_f = lambda Z: evaluate_f("exp_neg", Z)
    elif kind == "multi":
        C2 = rng.standard_normal((n, n))
        doc = {"A": "A.mtx", "B": "B.mtx", "D": "D.mtx",
               "terms": [{"C": "C.mtx", "functional": {"kind": "linear"}},
                         {"C": "C2.mtx", "functional": {"kind": "linear", "H": {"dense": "H.mtx"}}}]}
        H = rng.standard_normal((n, n))
        write_matrix(tmp_path / "C2.mtx", C2)
        write_matrix(tmp_path / "H.mtx", H)
        mats = {"A": A, "B": B, "C": C, "D": D}
        mats_f = None
    else:
        doc = {"A": "A.mtx", "B": "B.mtx", "C": "C.mtx", "D": "D.mtx", "functional": {
            "linear": {"kind": "linear"},
            "power_trace": {"kind": "power_trace", "p": 2},
            "g_of_trace": {"kind": "g_of_trace", "g": "exp_neg"},
        }[kind]}
        mats = {"A": A, "B": B, "C": C, "D": D}
        mats_f = {
            "linear": np.trace,
            "power_trace": lambda Z: np.trace(Z @ Z),
            "g_of_trace": lambda Z: np.exp(-np.trace(Z)),
        }[kind]
    p = write_problem(tmp_path, doc, mats)
    out = tmp_path / "out"
    code, _, _ = run(["solve", str(p), "--out", str(out)], capsys)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    if kind == "multi":
        X = read_matrix(out / "X.mtx")
        R = A @ X + X @ B + np.trace(X) * C + np.trace(H @ X) * C2 - D
        assert abs(np.linalg.norm(R) - rep["residual"]["value"]) <= 1e-12
        return
    _check_residual(out, rep, {**mats, "f": mats_f})


# experiments

def test_table1_empty_sigma_header_only(capsys):
    code, out, _ = run(["table1", "--sigma"], capsys)
    assert code == 0
    assert out == "sigma,alpha,iterations,final_residual\n"


def test_table1_rows(capsys):
    code, out, _ = run(["table1", "--sigma", "0.335", "1.789"], capsys)
    rows = read_csv(out)
    assert 8 <= int(rows[0]["iterations"]) <= 16 and float(rows[0]["final_residual"]) < 1e-7
    assert int(rows[1]["iterations"]) == 500 and float(rows[1]["final_residual"]) >= 1e-2


def test_table1_seed_env(monkeypatch, capsys):
    _, a, _ = run(["table1", "--sigma", "0.2", "--seed", "3"], capsys)
    monkeypatch.setenv("QUASILIN_SEED", "3")
    _, b, _ = run(["table1", "--sigma", "0.2", "--seed", "99"], capsys)
    assert a == b


def test_table1_json_to_dir(tmp_path, capsys):
    run(["table1", "--sigma", "0.5", "--format", "json", "--out", str(tmp_path)], capsys)
    rows = json.loads((tmp_path / "table1.json").read_text())
    assert rows[0]["termination"] == "converged"


def test_fig1_zero_n_single_row(tmp_path, capsys):
    run(["fig1", "--psi", "exp_neg", "--zero-n", "--out", str(tmp_path)], capsys)
    assert len(read_csv((tmp_path / "fig1_exp_neg.csv").read_text())) == 1


def test_fig1_shapes(capsys):
    _, out, _ = run(["fig1", "--psi", "sqrt"], capsys)
    v = np.array([float(r["diag_value"]) for r in read_csv(out)])
    assert np.all(np.diff(v)[: 3] > 0)
    _, out, _ = run(["fig1", "--psi", "exp_neg"], capsys)
    f = np.array([float(r["f_value"]) for r in read_csv(out)])
    d = np.diff(f)[:4]
    assert np.all(np.sign(d[1:]) == -np.sign(d[:-1]))


def test_ex31(capsys):
    code, out, _ = run(["ex31"], capsys)
    rows = read_csv(out)
    assert code == 0 and len(rows) == 5
    assert all(float(r["f_residual"]) <= 1e-12 for r in rows)


def test_roots(capsys):
    code, out, _ = run(["roots", "--g", "exp_neg", "--gamma1", "0", "--gamma2", "1", "--lo", "0", "--hi", "2"], capsys)
    assert code == 0
    assert json.loads(out)["roots"] == [pytest.approx(0.5671432904097838, abs=1e-12)]


def test_demo(tmp_path, capsys, rng):
    G = rng.standard_normal((3, 3))
    write_matrix(tmp_path / "Yb.mtx", G + G.T)
    code, _, _ = run(["demo", "--ybar", str(tmp_path / "Yb.mtx"), "--scheme", "NT", "--steps", "4",
                      "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = read_csv((tmp_path / "demo.csv").read_text())
    assert len(rows) == 4 and all(float(r["min_eig_Y"]) > 0 for r in rows)
