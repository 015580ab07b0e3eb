import pytest

_criteria: list[str] = []


@pytest.fixture
def report(request):
    """Print one PASS/FAIL line for an acceptance criterion, then assert it."""
    terminal = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {title}: {detail}"
        _criteria.append(line)
        if terminal is not None:
            terminal.write_line("")
            terminal.write_line(line)
        assert ok, line

    return emit


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
