import pytest


def pytest_configure(config):
    config._acceptance = []


@pytest.fixture
def record(request):
    """Record one acceptance line: ``record(criterion_id, passed, detail)``."""
    log = request.config._acceptance

    def _record(criterion, passed, detail):
        log.append((criterion, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}")
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config._acceptance
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(rows, key=lambda r: _sort_key(r[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} [{criterion}] {detail}")


def _sort_key(criterion):
    num = "".join(ch for ch in criterion if ch.isdigit())
    return (int(num) if num else 0, criterion)
