import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

N_CRITERIA = 13
_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def record(request):
    """Record a pass/fail line for an acceptance criterion (parts are ANDed)."""
    table = request.config.stash[_RESULTS]

    def _record(criterion: int, passed: bool, detail: str):
        table.setdefault(criterion, []).append((bool(passed), detail))
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")

    return _record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_RESULTS, {})
    if not table:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k in range(1, N_CRITERIA + 1):
        parts = table.get(k)
        if not parts:
            terminalreporter.write_line(f"criterion {k:2d}: FAIL - not run or errored before recording")
            continue
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
