import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance_report(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.stash[_LINES]

    def record(number, passed, detail):
        lines.append((number, f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"))

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
