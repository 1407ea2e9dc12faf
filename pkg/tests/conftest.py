import pytest

_CRITERIA = {}


class CriterionReport:
    """Collects the outcome line of one acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.details = []
        _CRITERIA[number] = (title, None, self.details)

    def note(self, text):
        self.details.append(text)

    def check(self, ok, text):
        self.details.append(text)
        title, prev, details = _CRITERIA[self.number]
        _CRITERIA[self.number] = (title, bool(ok) if prev is None else prev and bool(ok), details)
        return bool(ok)


@pytest.fixture
def criterion():
    return CriterionReport


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
        for line in details:
            terminalreporter.write_line(f"         {line}")
