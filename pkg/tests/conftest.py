"""Collects acceptance outcomes and prints one line per criterion at the end."""

_results = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, text = crit
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        if report.when == "setup" and report.outcome == "failed":
            status = "ERROR"
        _results[number] = (status, text)


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", tuple(mark.args)))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        status, text = _results[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status:<5} {text}")
