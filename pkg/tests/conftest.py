import pytest

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


class CriterionRecorder:
    """Collects one verdict per acceptance criterion for the terminal summary."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.details: list[str] = []

    def note(self, text: str) -> None:
        self.details.append(text)

    def check(self, ok: bool, text: str = "") -> bool:
        if text:
            self.details.append(text)
        _CRITERIA[self.number] = (self.title, bool(ok), "; ".join(self.details))
        return ok


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    rec = CriterionRecorder(number, title)
    # a test that errors before reaching check() is recorded as failed
    _CRITERIA[number] = (title, False, "did not complete")
    return rec


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} [{verdict}] {title}: {detail}")
