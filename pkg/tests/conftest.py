import re

import numpy as np
import pytest

_CRITERIA = {}


def pytest_runtest_logreport(report):
    match = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not match:
        return
    key = (int(match.group(1)), match.group(2))
    if report.when == "call" or report.outcome != "passed":
        if _CRITERIA.get(key) != "FAIL":
            _CRITERIA[key] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (number, name), outcome in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {number} {name.replace('_', ' ')}: {outcome}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
