import contextlib

import pytest

_ACCEPTANCE = []


class _Criterion:
    def __init__(self, name):
        self.name = name
        self.detail = ""


@pytest.fixture
def criterion():
    """Record one acceptance criterion; PASS unless the block raises."""

    @contextlib.contextmanager
    def record(name):
        c = _Criterion(name)
        try:
            yield c
        except BaseException as exc:
            _ACCEPTANCE.append((name, False, c.detail or type(exc).__name__))
            print(f"[FAIL] {name}: {c.detail}")
            raise
        _ACCEPTANCE.append((name, True, c.detail))
        print(f"[PASS] {name}: {c.detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
