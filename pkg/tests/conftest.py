import sys

import numpy as np
import pytest

from hydroprim import DomainSpec, build_basis


@pytest.fixture(scope="session")
def small_basis():
    return build_basis(DomainSpec(h=1.0, Lx=1.0, Ly=1.3, Mx=3, My=3, K=3))


@pytest.fixture(scope="session")
def mid_basis():
    return build_basis(DomainSpec(h=0.7, Lx=1.2, Ly=1.0, Mx=4, My=5, K=4))


@pytest.fixture(scope="session")
def ref_basis():
    return build_basis(DomainSpec(h=1.0, Lx=1.0, Ly=1.0, Mx=8, My=8, K=8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
