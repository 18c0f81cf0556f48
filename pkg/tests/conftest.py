import pytest

_LINES: list = []


@pytest.fixture
def acceptance_line():
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""
    def emit(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
