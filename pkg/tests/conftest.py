import pytest

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary prints them in order."""

    def record(number: int, passed: bool | None, detail: str) -> bool | None:
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        _CRITERIA[number] = f"criterion {number}: {status} - {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
