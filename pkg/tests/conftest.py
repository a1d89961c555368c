import numpy as np
import pytest

from spatial_mtr.model import (
    Dataset,
    Hyperparameters,
    ModelState,
    build_spatial_structure,
)

ACCEPTANCE_LINES = {}


def random_neighborhood(rng, k):
    a = rng.uniform(0.1, 1.0, (k, k))
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    if k == 1:
        a = np.zeros((1, 1))
    return a


def random_spd(rng, scale=1.0):
    m = rng.standard_normal((2, 2))
    return scale * (m @ m.T + 0.5 * np.eye(2))


def random_problem(rng, n=6, c=4, d=3, rho=None, lambda2=None):
    """Small random (dataset, spatial, hyper, state) tuple with c/2 >= 2."""
    k = c // 2
    rho = rng.uniform(0.0, 0.95) if rho is None else rho
    spatial = build_spatial_structure(random_neighborhood(rng, k), rho)
    x = rng.integers(0, 3, (n, d)).astype(float)
    y = rng.standard_normal((n, c))
    hyper = Hyperparameters(
        rng.uniform(0.5, 5.0) if lambda2 is None else lambda2, rng.uniform(2.0, 6.0), random_spd(rng)
    )
    state = ModelState(rng.standard_normal((d, c)), random_spd(rng), rng.uniform(0.2, 3.0, d))
    return Dataset(y, x), spatial, hyper, state


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def record_acceptance():
    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
