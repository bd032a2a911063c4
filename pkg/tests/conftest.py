import pytest

_LINES = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion and print it."""

    def emit(number, ok, summary, details=()):
        lines = [f"criterion {number}: {'PASS' if ok else 'FAIL'}  {summary}"]
        lines += [f"    {d}" for d in details]
        _LINES[number] = lines
        print("\n".join(lines))
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_LINES):
        for line in _LINES[number]:
            terminalreporter.write_line(line)
