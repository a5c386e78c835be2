import numpy as np
import pytest

from invdemand.dynamics import make_grid
from invdemand.lower_level import assemble_lower_system, sample_demand_basis
from invdemand.network import build_tree

DELTA2 = [[1, 2, 3], [3, 2, 1], [1, 3, 2], [2, 1, 3], [2, 3, 1], [3, 1, 2]]
DELTA3 = [[1, 2, 4], [4, 2, 1], [1, 4, 2], [2, 1, 4], [2, 4, 1], [4, 1, 2]]
BETA2 = [
    [0.20, 0.25, 0.10, 0.10, 0.30, 0.05],
    [0.18, 0.23, 0.15, 0.11, 0.28, 0.05],
    [0.21, 0.27, 0.08, 0.11, 0.27, 0.06],
    [0.21, 0.23, 0.09, 0.11, 0.32, 0.04],
]
BETA3 = [
    [0.30, 0.35, 0.05, 0.10, 0.18, 0.02],
    [0.28, 0.36, 0.04, 0.11, 0.17, 0.04],
    [0.33, 0.33, 0.05, 0.08, 0.20, 0.01],
    [0.31, 0.34, 0.06, 0.09, 0.18, 0.02],
]


@pytest.fixture(scope="session")
def ref_net():
    return build_tree([(1, 0, 2.0), (2, 1, 4.0), (3, 1, 1.0)], {2: 0.45, 3: 0.55}, 2.0)


@pytest.fixture(scope="session")
def ref_grid(ref_net):
    return make_grid(ref_net, 0.1, 10.0)


@pytest.fixture(scope="session")
def ref_basis(ref_grid):
    return sample_demand_basis([0, 4, 7, 10], {2: DELTA2, 3: DELTA3}, ref_grid)


@pytest.fixture(scope="session")
def ref_system(ref_net, ref_grid, ref_basis):
    return assemble_lower_system(ref_net, ref_grid, ref_basis, 0.01)


@pytest.fixture(scope="session")
def ref_rows():
    return np.hstack([np.array(BETA2), np.array(BETA3)])


@pytest.fixture(scope="session")
def six_arc_net():
    # six-arc example tree: v0 -> v1 -> {v2, v3}, v2 -> {v4, v5}, v3 -> v6
    return build_tree(
        [(1, 0, 1.0), (2, 1, 2.0), (3, 1, 0.5), (4, 2, 1.0), (5, 2, 4.0), (6, 3, 2.0)],
        {2: 0.3, 3: 0.7, 4: 0.6, 5: 0.4},
        1.0,
    )


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line; printed now and again in the terminal summary."""

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
