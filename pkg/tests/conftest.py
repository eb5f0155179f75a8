import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion():
    """``criterion(n, ok, detail)`` prints and records one PASS/FAIL line, then asserts ``ok``."""

    def record(n: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        _LINES.append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
