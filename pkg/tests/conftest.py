import pytest
from hypothesis import HealthCheck, settings

from whitneyhardy.geometry import PlaneSplit
from whitneyhardy.whitney import partition_of_unity, whitney_decompose

settings.register_profile("numerics", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("numerics")


@pytest.fixture(scope="session")
def dec21():
    return whitney_decompose(PlaneSplit(2, 1), ((-1, -1), (1, 1)), 6)


@pytest.fixture(scope="session")
def pou21(dec21):
    return partition_of_unity(dec21)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""
    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
