import numpy as np
import pytest

from mompc.mpc import run_closed_loop
from mompc.problems import make_cstr2, make_cstr3, make_econ

_CRITERIA = {}


@pytest.fixture(scope="session")
def cstr2():
    return make_cstr2()


@pytest.fixture(scope="session")
def cstr3():
    return make_cstr3()


@pytest.fixture(scope="session")
def econ():
    return make_econ()


class TraceCache:
    """Closed-loop runs shared between tests; keyed by a label."""

    def __init__(self):
        self._runs = {}

    def get(self, key, objectives, x0, cfg, first_solution=None):
        if key not in self._runs:
            self._runs[key] = run_closed_loop(objectives, np.asarray(x0, float), cfg, first_solution)
        return self._runs[key]


@pytest.fixture(scope="session")
def traces():
    return TraceCache()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        # several tests may share a criterion; any failure fails it
        prev = _CRITERIA.get(n, (title, "passed"))[1]
        _CRITERIA[n] = (title, rep.outcome if prev == "passed" else prev)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, outcome = _CRITERIA[n]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {verdict}: {title}")
