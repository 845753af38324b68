import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one acceptance verdict line; printed in the terminal summary."""

    def record(criterion: str, ok: bool, detail: str):
        _LINES.append(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
        print(_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: s.split()[1]):
            terminalreporter.write_line(line)
