import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(id, passed, detail)``."""
    def record(cid, passed, detail=""):
        _ACCEPTANCE.append((cid, bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, passed, detail in sorted(_ACCEPTANCE, key=lambda r: (int(str(r[0]).rstrip("abc")), str(r[0]))):
        terminalreporter.write_line(f"criterion {cid}: {'PASS' if passed else 'FAIL'}  {detail}")
