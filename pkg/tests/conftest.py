import numpy as np
import pytest

from conewatch import get_kernels, get_model

try:
    get_kernels("cython")
    BACKENDS = ["cython", "python"]
except ImportError:  # extension not built
    BACKENDS = ["python"]

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return get_kernels(request.param)


@pytest.fixture(scope="session")
def linear_diag():
    return get_model("linear_diag")


@pytest.fixture(scope="session")
def limit_cycle():
    return get_model("limit_cycle_3d")


@pytest.fixture(scope="session")
def rotation():
    return get_model("rotation_counterexample")


@pytest.fixture(scope="session")
def may_leonard():
    return get_model("may_leonard")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
