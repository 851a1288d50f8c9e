import time

import numpy as np
import pytest


def well_conditioned(rng, n, shift=None):
    """Random matrix with spectrum pushed to the right half plane."""
    shift = n if shift is None else shift
    return rng.standard_normal((n, n)) + shift * np.eye(n)


def spd(rng, n, floor=1.0):
    G = rng.standard_normal((n, n))
    return G @ G.T + floor * np.eye(n)


def rel_err(X, Y):
    return np.linalg.norm(X - Y) / max(np.linalg.norm(Y), 1e-300)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance bookkeeping: criterion number -> (passed, detail)
ACCEPTANCE = {}
SUITE_BUDGET_S = 60.0
_start = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    return line


def pytest_sessionstart(session):
    _start["t"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _start.get("t", time.perf_counter())
    _start["elapsed"] = elapsed
    if 12 in ACCEPTANCE and elapsed > SUITE_BUDGET_S:
        ok, detail = ACCEPTANCE[12]
        ACCEPTANCE[12] = (False, f"{detail}; suite took {elapsed:.1f} s > {SUITE_BUDGET_S:.0f} s")
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    if 12 in ACCEPTANCE:
        terminalreporter.write_line(f"suite runtime {_start.get('elapsed', float('nan')):.1f} s")
