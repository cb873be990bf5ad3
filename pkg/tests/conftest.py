import numpy as np
import pytest

# criterion number -> (title, list of outcomes)
_CRITERIA: dict = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            num, title = mark.args
            _CRITERIA.setdefault(num, [title, []])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "pass" if rep.passed else ("skip" if rep.skipped else "fail")
        _CRITERIA[num][1].append(status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, results = _CRITERIA[num]
        if not results:
            verdict = "NOT RUN"
        elif "fail" in results:
            verdict = "FAIL"
        elif all(r == "pass" for r in results):
            verdict = "PASS"
        else:
            verdict = "INCOMPLETE"
        tr.write_line(f"[{verdict:>10}] criterion {num:>2}: {title} ({len(results)} tests)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
