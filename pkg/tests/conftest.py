import math

import pytest
from hypothesis import HealthCheck, settings

from batreg.core import BatteryParams, MarketPrices
from batreg.cost import PowerLawStress

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def phi():
    return PowerLawStress()


@pytest.fixture
def battery():
    return BatteryParams()


@pytest.fixture
def lossy():
    s = math.sqrt(0.85)
    return BatteryParams(eta_c=s, eta_d=s)


@pytest.fixture
def balanced():
    return MarketPrices(50.0, 50.0)


# acceptance results, printed once at the end of the run
ACCEPTANCE = []


@pytest.fixture
def acceptance():
    def record(label, passed, detail):
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
