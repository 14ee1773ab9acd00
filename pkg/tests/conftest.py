import pytest

_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def detail():
    """Free-form measurements a criterion test reports in the summary line."""
    return {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.failed:
        return
    number, title = marker.args
    info = item.funcargs.get("detail") or {}
    text = ", ".join(f"{k}={v}" for k, v in info.items())
    status = "PASS" if report.passed else "FAIL"
    if report.when == "call" or number not in _RESULTS:
        _RESULTS[number] = (status, title, text)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title, text = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2} {status}: {title}"
                                    + (f" [{text}]" if text else ""))
