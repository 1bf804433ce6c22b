import numpy as np
import pytest

from rptrellis.ratedist import ReproductionDistribution


@pytest.fixture(scope="session")
def uniform_r1():
    return ReproductionDistribution.discrete([0.2, 0.5, 0.8], [0.368, 0.264, 0.368])


@pytest.fixture(scope="session")
def gauss_r1():
    return ReproductionDistribution.gaussian(0.0, 0.75)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _ACCEPTANCE.extend(v for k, v in report.user_properties if k == "acceptance")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
