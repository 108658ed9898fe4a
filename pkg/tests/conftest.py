import pytest

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


class CriterionLog:
    def record(self, number: int, title: str, passed: bool, detail: str = "") -> bool:
        _CRITERIA[number] = (title, bool(passed), detail)
        print(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title}  {detail}")
        return bool(passed)


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title}  {detail}")
