import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# derandomised so two runs of the suite draw the same examples
settings.register_profile("tvk", derandomize=True, deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("tvk")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# acceptance criteria: one PASS/FAIL line each in the terminal summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if rep.when == "call" or rep.failed:
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        prev = _CRITERIA.get(number)
        if prev is None or prev[1] == "PASS":
            _CRITERIA[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number} ({title}): {status}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
