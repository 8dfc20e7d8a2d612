"""Session-wide fixtures: acceptance-criterion reporting.

Acceptance tests record one line per criterion through the `criterion`
fixture; the lines are echoed in a dedicated section after the test summary
so a full run always ends with a per-criterion PASS/FAIL listing.
"""

from __future__ import annotations

import pytest

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """criterion(number, passed, detail) -> records and returns `passed`."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {detail}")
