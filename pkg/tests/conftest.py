import numpy as np
import pytest
from hypothesis import settings

from fbsopf.grid import Branch, Bus, RadialNetwork, cigre_lv

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# filled by test_acceptance, printed at the end of the session
CRITERIA = {}


def two_bus(r=0.1, x=0.0, i_max=10.0):
    return RadialNetwork((Bus(0, "slack"), Bus(1, "load")), (Branch(0, 1, r, x, i_max),))


def chain(n, r=0.01, x=0.005, i_max=10.0):
    buses = (Bus(0, "slack"),) + tuple(Bus(i, "generator-capable") for i in range(1, n))
    return RadialNetwork(buses, tuple(Branch(i, i + 1, r, x, i_max) for i in range(n - 1)))


@pytest.fixture(scope="session")
def cigre():
    return cigre_lv()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
