import pytest

_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(key: str, passed: bool, detail: str = "") -> None:
        _RESULTS[key] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_RESULTS, key=lambda k: (int(k.split(".")[0].split()[0]) if k[0].isdigit() else 99, k)):
        ok, detail = _RESULTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}  {detail}")
