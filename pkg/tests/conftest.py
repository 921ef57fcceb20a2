import pytest

# (criterion, passed, detail) rows from tests/test_acceptance.py
ACCEPTANCE: list = []


@pytest.fixture
def record():
    def _record(criterion: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE.append((criterion, bool(passed), detail))
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
