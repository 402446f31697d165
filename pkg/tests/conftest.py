import pytest

_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion: ``criterion(label, passed, detail)`` then assert."""

    def record(label, passed, detail):
        line = f"{label} {'PASS' if passed else 'FAIL'}: {detail}"
        _RESULTS[label] = line
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for label in sorted(_RESULTS, key=lambda s: int(s[1:])):
            terminalreporter.write_line(_RESULTS[label])
