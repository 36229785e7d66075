import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion number -> (title, outcome, measured detail)
_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def measured(request):
    """Let an acceptance test attach the numbers it measured to its summary line."""
    marker = request.node.get_closest_marker("criterion")
    details = []
    yield details.append
    if marker is not None:
        number = marker.args[0]
        title, outcome, _ = _CRITERIA.get(number, (marker.args[1], None, ""))
        _CRITERIA[number] = (title, outcome, "; ".join(details))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args[0], marker.args[1]
    prev = _CRITERIA.get(number, (title, None, ""))
    if report.when == "call" or (report.when == "setup" and report.failed):
        _CRITERIA[number] = (title, report.passed, prev[2])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        state = "PASS" if passed else ("FAIL" if passed is False else "NOT RUN")
        line = f"criterion {number:2d} {state}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
