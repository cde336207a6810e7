"""Per-criterion PASS/FAIL summary for the acceptance suite."""

import pytest

_results = {}  # criterion number -> [title, all passed, details]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    number, title = marker.args
    entry = _results.setdefault(number, [title, True, []])
    if not rep.passed:
        entry[1] = False
    if rep.when == "call":
        entry[2].extend(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, ok, details = _results[number]
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}"
        if details:
            line += "  [" + ", ".join(details) + "]"
        terminalreporter.write_line(line)
