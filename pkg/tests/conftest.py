import pytest

_VERDICTS: dict = {}


@pytest.fixture
def verdict(request):
    """Record ``(criterion, passed, detail)`` so the summary prints one line per criterion."""

    def record(criterion: int, passed: bool, detail: str):
        _VERDICTS[criterion] = (bool(passed), detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_VERDICTS):
        passed, detail = _VERDICTS[c]
        terminalreporter.write_line(f"criterion {c}: {'PASS' if passed else 'FAIL'}  {detail}")
