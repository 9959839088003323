"""Collects one summary line per acceptance criterion."""
import pytest

_LINES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, label): acceptance criterion number")


@pytest.fixture
def record(request):
    """Dict the test fills with measured values shown in its summary line."""
    details = {}
    request.node._criterion_details = details
    return details


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, label = mark.args
    details = getattr(item, "_criterion_details", {})
    verdict = details.pop("verdict", None) or ("PASS" if rep.passed else "FAIL")
    text = ", ".join(f"{k}={v}" for k, v in details.items())
    line = f"criterion {n:>2} {verdict:<10} {label}" + (f": {text}" if text else "")
    _LINES.setdefault(n, []).append(line)
    print("\n" + line)


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_LINES):
        for line in _LINES[n]:
            terminalreporter.write_line(line)
