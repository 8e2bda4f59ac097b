import os

import pytest
from hypothesis import HealthCheck, settings

from microfuzz.clock import RealClock, calibrate

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_criteria: dict[int, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def hz():
    """Calibrated cycle rate of the real clock."""
    return calibrate(RealClock()).hz


@pytest.fixture
def fixtures_registry():
    import fixture_targets
    return fixture_targets.REGISTRY


@pytest.fixture(scope="session")
def corpus():
    from microfuzz.corpus import REGISTRY
    return REGISTRY


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None or report.when != "call" and report.outcome != "failed":
        return
    number, title = marker
    status = "PASS" if report.outcome == "passed" else "FAIL"
    if report.outcome == "skipped":
        status = "SKIP"
    prev = _criteria.get(number)
    if prev is None or prev[0] == "PASS":
        _criteria[number] = (status, title)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("acceptance")
    if m is not None:
        outcome.get_result().criterion = (m.kwargs["criterion"], m.kwargs.get("title", item.name))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, title = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {title}")
