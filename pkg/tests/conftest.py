import pytest

from clockfcs import fcs

import invariants
from invariants import check_counting_statistics, check_noise

ACCEPTANCE = {}
INVARIANT_FAILURES = []


@pytest.fixture(autouse=True)
def structural_invariants(monkeypatch):
    """Check every CountingStatistics built during a test, and every noise value."""
    built, noises = [], []
    init, result = fcs.CountingStatistics.__init__, fcs.CountingStatistics._result

    def recording_init(self, *args, **kwargs):
        init(self, *args, **kwargs)
        built.append(self)

    def recording_result(self, F, D, strict):
        noises.append(D)
        return result(self, F, D, strict)

    monkeypatch.setattr(fcs.CountingStatistics, "__init__", recording_init)
    monkeypatch.setattr(fcs.CountingStatistics, "_result", recording_result)
    yield
    monkeypatch.undo()
    for stats in built:
        check_counting_statistics(stats)
    for D in noises:
        check_noise(D)


def pytest_runtest_logreport(report):
    if report.when == "teardown" and report.failed:
        INVARIANT_FAILURES.append(report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if 9 in ACCEPTANCE:
        counts = invariants.COUNTS
        verdict = "FAIL" if INVARIANT_FAILURES else "PASS"
        ACCEPTANCE[9] = (
            f"criterion 9: {verdict} suite-wide: {counts['systems']} systems, {counts['joint']} memory-classicality "
            f"checks, {counts['results']} noise values; {len(INVARIANT_FAILURES)} tests with invariant failures"
        )
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
