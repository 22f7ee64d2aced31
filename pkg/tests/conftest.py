import numpy as np
import pytest

from funbayes.dataset import Dataset, DiscreteKind
from funbayes.experiments import SimConfig, simulate_dataset


def make_dataset(n=10, m=20, p=1, q=1, seed=0, ordered=False, with_y=True):
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, np.pi, m)
    amp = rng.uniform(0, 1, (n, 3))
    curves = (amp[:, :1] * np.cos(2 * grid) + amp[:, 1:2] * np.sin(4 * grid)
              + amp[:, 2:3] * (grid ** 2 - np.pi * grid))
    xc = rng.normal(size=(n, p))
    levels = 4 if ordered else 2
    xd = rng.integers(0, levels, size=(n, q))
    y = curves.sum(axis=1) / m + xc.sum(axis=1) + xd.sum(axis=1) + rng.normal(scale=0.3, size=n)
    kinds = tuple(DiscreteKind(levels, ordered) for _ in range(q))
    return Dataset(grid, curves, xc, xd, y if with_y else None, kinds,
                   tuple(f"x{j}" for j in range(p)), tuple(f"d{s}" for s in range(q)))


@pytest.fixture
def small_ds():
    return make_dataset()


@pytest.fixture(scope="session")
def model1_n50():
    return simulate_dataset(SimConfig(n=50, model=1, seed=0), 0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
