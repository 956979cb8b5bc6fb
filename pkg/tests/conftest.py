import pytest

CRITERIA_LINES: list[str] = []


@pytest.fixture(scope="session")
def criteria_log():
    return CRITERIA_LINES


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
