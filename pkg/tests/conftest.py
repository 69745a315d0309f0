import numpy as np
import pytest

_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion(request):
    """Record one named acceptance line; the summary hook prints them all."""

    def record(name: str, ok: bool, detail: str = ""):
        _RESULTS.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
