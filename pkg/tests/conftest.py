"""Shared fixtures and the acceptance-criteria result banner."""

from __future__ import annotations

import pytest

_ACCEPTANCE_RESULTS: list[tuple[str, str, bool]] = []


@pytest.fixture
def record_criterion():
    """Record a criterion verdict before asserting, so the banner always prints."""

    def _record(ident: str, description: str, passed: bool) -> bool:
        _ACCEPTANCE_RESULTS.append((ident, description, bool(passed)))
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for ident, desc, ok in sorted(_ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {ident}: {desc}")
