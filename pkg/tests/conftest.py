import numpy as np
import pytest

from locagg.admm import AdmmConfig, PenaltyConfig
from locagg.data import random_dataset
from locagg.local import SolverControls
from locagg.penalties import chain_graph

TIGHT = AdmmConfig(eps_abs=1e-10, eps_rel=1e-10, max_iters=20000,
                   controls=SolverControls(inner_tol=1e-12, max_inner_iters=100000))


@pytest.fixture
def small_gaussian():
    ds, B = random_dataset(30, 8, 6, "gaussian", seed=3)
    return ds, chain_graph(6), PenaltyConfig(1.0, 0.5, 0.0)


@pytest.fixture
def small_binomial():
    ds, B = random_dataset(60, 5, 4, "binomial", seed=4)
    return ds, chain_graph(4), PenaltyConfig(0.5, 0.2, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_CRITERIA = {}


def record_criterion(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    _CRITERIA[number] = line
    return line


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
