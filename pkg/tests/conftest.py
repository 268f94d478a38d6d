import pytest
from hypothesis import settings

from gictime.timebase import to_ns

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=200)
settings.load_profile("repo")

_criteria: list[str] = []


@pytest.fixture
def criterion():
    """Record a PASS/FAIL line for the end-of-run acceptance summary."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        _criteria.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criteria, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


def s(value) -> int:
    """Seconds literal to ns, for readable test tables."""
    return to_ns(value)
