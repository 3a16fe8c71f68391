import numpy as np
import pytest

from causalbma.data import ColumnMeta, Dataset


def discrete_dataset(rows, cards, names=None, roles=None):
    rows = np.asarray(rows, dtype=float)
    d = rows.shape[1]
    names = names or [f"v{i}" for i in range(d)]
    roles = roles or ["other"] * d
    return Dataset([ColumnMeta(n, "discrete", k, r) for n, k, r in zip(names, cards, roles)], rows)


def continuous_dataset(rows, names=None, roles=None):
    rows = np.asarray(rows, dtype=float)
    d = rows.shape[1]
    names = names or [f"v{i}" for i in range(d)]
    roles = roles or ["other"] * d
    return Dataset([ColumnMeta(n, "continuous", None, r) for n, r in zip(names, roles)], rows)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def binary3(rng):
    """N=200 binary data from 0 -> 1 -> 2 with a weak 0 -> 2 link."""
    n = 200
    a = rng.random(n) < 0.5
    b = rng.random(n) < np.where(a, 0.8, 0.25)
    c = rng.random(n) < np.where(b, 0.75, 0.2) * np.where(a, 1.0, 0.9)
    return discrete_dataset(np.column_stack([a, b, c]).astype(float), [2, 2, 2])


@pytest.fixture
def gauss3(rng):
    n = 300
    x0 = rng.standard_normal(n)
    x1 = 0.7 * x0 + rng.standard_normal(n)
    x2 = -0.5 * x1 + rng.standard_normal(n)
    return continuous_dataset(np.column_stack([x0, x1, x2]))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
