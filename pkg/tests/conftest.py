import pytest

_VERDICTS = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the summary prints them after the run."""

    def record(number, status, detail):
        line = f"criterion {number}: {status} | {detail}"
        _VERDICTS.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
