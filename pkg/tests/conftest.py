import functools

import numpy as np
import pytest

from fraccheeger import ContinuationConfig, FracParams, build_grid, continuation_estimates

SCHEDULE = (2.0, 1.5, 1.25, 1.1, 1.05)
DIMS = {"interval": 1, "square": 2, "ball": 2, "l_shape": 2}

_LINES = []


@functools.lru_cache(maxsize=None)
def pipeline(shape, n, s, with_ball=True, schedule=SCHEDULE):
    """Continuation run shared by every test that needs it."""
    grid = build_grid(shape, n, DIMS[shape])
    params = FracParams(grid.dim, s, schedule[0], strict=False)
    est = continuation_estimates(grid, params, schedule, ContinuationConfig(with_ball=with_ball))
    return grid, est


@pytest.fixture
def run_pipeline():
    return pipeline


@pytest.fixture
def criterion():
    """Record one acceptance verdict line for the terminal summary."""
    def record(number, name, ok, detail=""):
        _LINES.append(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
        return ok
    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
