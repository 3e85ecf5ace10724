from collections import OrderedDict

import pytest

# criterion number -> list of (label, passed, detail) from each contributing test
_CRITERIA: "OrderedDict[int, list]" = OrderedDict()


class CriterionRecorder:
    def __init__(self, number: int, label: str):
        self.number = number
        self.label = label
        self.detail = ""

    def note(self, text: str):
        self.detail = text


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance check.

    Tests mark themselves with ``@pytest.mark.criterion(n)``; the recorder
    stores a detail string that is printed with the pass/fail line.
    """
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0] if marker else 0
    rec = CriterionRecorder(number, request.node.name)
    yield rec
    request.node.criterion_record = rec


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "teardown":
        if report.when == "call" or report.failed:
            item._criterion_outcome = report.passed if report.when == "call" else False
        return
    rec = getattr(item, "criterion_record", None)
    if rec is None:
        return
    passed = getattr(item, "_criterion_outcome", False)
    _CRITERIA.setdefault(rec.number, []).append((rec.label, passed, rec.detail))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        rows = _CRITERIA[number]
        ok = all(passed for _, passed, _ in rows)
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}")
        for label, passed, detail in rows:
            mark = "pass" if passed else "FAIL"
            terminalreporter.write_line(f"    [{mark}] {label}: {detail}")
