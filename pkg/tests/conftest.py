import pytest

_VERDICTS: dict[int, tuple[str, str]] = {}


@pytest.fixture
def verdict():
    """Record a one-line PASS/FAIL verdict for an acceptance criterion."""
    def record(number: int, title: str, passed: bool, detail: str = ""):
        line = f"{title}: {detail}" if detail else title
        _VERDICTS[number] = ("PASS" if passed else "FAIL", line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        status, line = _VERDICTS[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}  {line}")
