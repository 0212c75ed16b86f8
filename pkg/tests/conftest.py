import re

import pytest

_CRITERIA = {}
_NOTES = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


@pytest.fixture
def note(request):
    """Attach measured values to the acceptance line of the running criterion."""
    m = _PATTERN.search(request.node.nodeid)

    def add(text):
        if m:
            _NOTES.setdefault(int(m.group(1)), []).append(str(text))
    return add


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    if report.failed:
        _CRITERIA[k] = "FAIL"
    elif report.when == "call" and report.passed:
        _CRITERIA.setdefault(k, "PASS")
    elif report.skipped:
        _CRITERIA.setdefault(k, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        extra = "; ".join(_NOTES.get(k, []))
        terminalreporter.write_line(f"criterion {k}: {_CRITERIA[k]}" + (f"  [{extra}]" if extra else ""))
