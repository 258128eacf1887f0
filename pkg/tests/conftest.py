import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import i1  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

# criterion number -> (title, passed); filled by test_acceptance
CRITERIA: dict[int, tuple[str, bool]] = {}
REPORT_LINES: list[str] = []


@pytest.fixture
def inst_i1():
    return i1()


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def report_lines():
    return REPORT_LINES


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if rep.when == "call" or rep.failed:
        ok = rep.passed and CRITERIA.get(n, (title, True))[1]
        CRITERIA[n] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, ok = CRITERIA[n]
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}")
    for line in REPORT_LINES:
        tr.write_line(line)
