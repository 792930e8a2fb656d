import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one summary line per acceptance criterion."""

    def record(number: int, title: str, ok: bool | None, detail: str) -> None:
        status = "NOT RUN" if ok is None else ("PASS" if ok else "FAIL")
        _VERDICTS[number] = f"criterion {number} [{status}] {title}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[k])
