import pytest

_CRITERIA = {}


class CriterionRecorder:
    """Collects one pass/fail line per acceptance criterion."""

    def __call__(self, number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok


@pytest.fixture(scope="session")
def criterion():
    return CriterionRecorder()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
