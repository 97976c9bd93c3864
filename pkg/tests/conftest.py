"""Collects one result line per acceptance criterion and prints them at the end."""

import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}
_STARTED: set[int] = set()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: full-scale acceptance criterion (slow)")
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_setup(item):
    m = item.get_closest_marker("criterion")
    if m is not None:
        _STARTED.add(int(m.args[0]))


@pytest.fixture
def record():
    def _record(number: int, passed: bool, detail: str) -> bool:
        _RESULTS[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _STARTED:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_STARTED):
        if n not in _RESULTS:
            terminalreporter.write_line(f"criterion {n:2d}: ERROR  no result recorded")
            continue
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
