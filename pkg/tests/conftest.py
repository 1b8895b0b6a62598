import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """Record and assert one acceptance criterion.

    Each call prints a ``criterion N: PASS|FAIL`` line immediately and again in
    the terminal summary so the verdicts are visible with output capture on.
    """
    def check(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES[number] = line
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_LINES):
            terminalreporter.write_line(_LINES[n])
