import pytest

_ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_addoption(parser):
    parser.addoption("--long", action="store_true", default=False, help="run paper-scale (long) checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "long: paper-scale runs, enabled with --long")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--long"):
        return
    skip = pytest.mark.skip(reason="paper-scale run; use --long")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion, then assert."""

    def record(criterion: str, ok: bool, detail: str):
        _ACCEPTANCE.append((criterion, "PASS" if ok else "FAIL", detail))
        print(f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, f"criterion {criterion}: {detail}"

    return record


def pytest_runtest_logreport(report):
    if report.when == "setup" and report.skipped and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE.append((name, "SKIP", str(report.longrepr[-1]) if report.longrepr else ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status:4} criterion {crit}: {detail}")
