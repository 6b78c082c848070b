import time

import pytest

_CRITERIA = {}


class CriterionRecorder:
    """Collects the verdict line of one acceptance criterion."""

    def __init__(self, number, title, budget_s):
        self.number = number
        self.title = title
        self.budget_s = budget_s
        self.start = time.perf_counter()
        self.detail = ""

    def finish(self, passed, detail):
        elapsed = time.perf_counter() - self.start
        within = elapsed <= self.budget_s
        verdict = "PASS" if passed and within else "FAIL"
        timing = f"{elapsed:.1f}s of {self.budget_s:.0f}s budget"
        line = f"[{verdict}] criterion {self.number:2d} {self.title}: {detail} ({timing})"
        _CRITERIA[self.number] = line
        print(line)
        return passed and within


@pytest.fixture
def criterion():
    def make(number, title, budget_s):
        return CriterionRecorder(number, title, budget_s)

    return make


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
