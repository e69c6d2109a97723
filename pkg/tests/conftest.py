import numpy as np
import pytest

from etomo.field_ops import ElasticField, Grid, VectorField
from etomo.phantoms import bandlimited_values, gaussian_envelope
from etomo.tensor_core import TensorShape


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def bump(grid, sigma=0.8):
    return gaussian_envelope(grid, sigma)


def bandlimited_field(grid, m, rng, band=0.25):
    shape = TensorShape(grid.n, m)
    return ElasticField(grid, shape, bandlimited_values(grid, shape.dim, rng, band))


def bandlimited_vector(grid, rng, band=0.25):
    return VectorField(grid, bandlimited_values(grid, grid.n, rng, band))


def rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.max(np.abs(b)), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b)) / scale)


__all__ = ["Grid", "bump", "bandlimited_field", "bandlimited_vector", "rel"]


# --------------------------------------------------------------------------
# acceptance reporting: one line per criterion in the terminal summary

import time as _time

ACCEPTANCE_LINES: list[str] = []
SUITE_BUDGET_S = 600.0
_START = {}


def record_acceptance(criterion: int, ok: bool, detail: str):
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_sessionstart(session):
    _START["t"] = _time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    elapsed = _time.perf_counter() - _START.get("t", _time.perf_counter())
    _START["elapsed"] = elapsed
    if elapsed > SUITE_BUDGET_S and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
    elapsed = _START.get("elapsed", 0.0)
    ok = elapsed <= SUITE_BUDGET_S
    terminalreporter.write_line(
        f"suite runtime: {'PASS' if ok else 'FAIL'}  {elapsed:.1f} s (budget {SUITE_BUDGET_S:.0f} s)")
