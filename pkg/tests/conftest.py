import re

import pytest

from kgplan import demo

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_outcomes: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m or "test_acceptance" not in report.nodeid:
        return
    n = int(m.group(1))
    if report.when == "call" or report.failed:
        prev = _outcomes.get(n, ("PASS", ""))[0]
        status = "FAIL" if report.failed or prev == "FAIL" else "PASS"
        _outcomes[n] = (status, m.group(2).replace("_", " "))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        status, what = _outcomes[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}: {what}")


@pytest.fixture(scope="session")
def science_graph():
    return demo.fixture_graph("science")


@pytest.fixture(scope="session")
def academia_fixture():
    return demo.fixture_graph("academia")


@pytest.fixture(scope="session")
def olympics_graph():
    return demo.fixture_graph("olympics")


@pytest.fixture(scope="session")
def newton_graph():
    return demo.fixture_graph("newton")
