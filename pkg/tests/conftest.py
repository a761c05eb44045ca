import pytest

_RESULTS = {}


class Criterion:
    """Collects the checks of one acceptance criterion for the summary."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.checks = []

    def check(self, ok, detail):
        self.checks.append((bool(ok), detail))
        return bool(ok)

    @property
    def passed(self):
        return bool(self.checks) and all(ok for ok, _ in self.checks)

    def assert_all(self):
        failed = [d for ok, d in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion(request):
    number, title = request.node.get_closest_marker("criterion").args
    c = Criterion(number, title)
    _RESULTS[number] = c
    return c


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        c = _RESULTS[number]
        terminalreporter.write_line(f"{'PASS' if c.passed else 'FAIL'} criterion {number:>2}: {c.title}")
        for ok, detail in c.checks:
            terminalreporter.write_line(f"        {'ok  ' if ok else 'FAIL'} {detail}")
