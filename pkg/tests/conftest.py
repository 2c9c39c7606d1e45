"""Per-criterion reporting for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n)`` are grouped by ``n``; at the end
of the session one ``criterion n: PASS`` or ``FAIL`` line is printed per
group that ran. A group passes when every one of its tests passed.
"""


_criteria = {}
_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion "
                                       "number checked by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _criteria[item.nodeid] = int(marker.args[0])


def pytest_runtest_logreport(report):
    n = _criteria.get(report.nodeid)
    if n is None:
        return
    ok = _outcomes.setdefault(n, True)
    if report.failed or (report.when == "call" and report.skipped):
        _outcomes[n] = False
    else:
        _outcomes[n] = ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        verdict = "PASS" if _outcomes[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}")

