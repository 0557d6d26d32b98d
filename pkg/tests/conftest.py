import os

import numpy as np
import pytest
from hypothesis import settings

from battsched.battery import BatteryParams, DegradationCurve, default_curve

settings.register_profile("default", max_examples=60, deadline=None)
settings.register_profile("ci", max_examples=25, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion this test checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    n, title = mark.args
    entry = _criteria.setdefault(n, {"title": title, "passed": True, "seen": False})
    if report.when == "call":
        entry["seen"] = True
    if report.failed or report.skipped:
        entry["passed"] = False
        entry["seen"] = True


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "PASS" if e["passed"] and e["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {e['title']}")


@pytest.fixture
def params():
    return BatteryParams()


@pytest.fixture
def two_knot():
    return DegradationCurve.from_knots([(0.0, 0.0), (100.0, 1.0)])


@pytest.fixture(scope="session")
def synthetic():
    return default_curve()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
