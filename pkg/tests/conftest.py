import pytest

from isoplab.geometry import builtin_metric, round_metric


@pytest.fixture(scope="session")
def round512():
    return round_metric(512)


@pytest.fixture(scope="session")
def quad512():
    return builtin_metric("quadrupole", 512, 0.2)


@pytest.fixture(scope="session")
def cos2_512():
    return builtin_metric("cos2", 512, 0.3)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
