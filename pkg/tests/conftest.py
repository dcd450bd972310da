import numpy as np
import pytest

from sparse_subarrays.benchmarks import compact_array
from sparse_subarrays.geometry import build_subarray_layout, expand_super_array


@pytest.fixture(scope="session")
def layout():
    return build_subarray_layout()


@pytest.fixture(scope="session")
def compact(layout):
    return compact_array(layout)


@pytest.fixture(scope="session")
def compact_D(layout, compact):
    return expand_super_array(compact, layout)


def random_positions(rng, n=64, spread=5.0):
    return rng.uniform(-spread, spread, size=(n, 2))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


