import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, derandomize=True)
settings.load_profile("ci")

_LINES = []


class Verdict:
    def __init__(self, key):
        self.key = key
        self.lines = []

    def note(self, text):
        self.lines.append(text)

    def check(self, ok, summary):
        _LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {self.key}: {summary}")
        print(_LINES[-1])
        for line in self.lines:
            print("    " + line)
        assert ok, summary


@pytest.fixture
def verdict(request):
    return Verdict(request.node.get_closest_marker("criterion").args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
