"""Shared fixtures and the acceptance-criteria recorder.

Tests decorated with ``@pytest.mark.acceptance(n, "text")`` count towards
criterion n; the terminal summary prints one PASS/FAIL line per criterion.
A criterion passes only if every test attached to it ran and passed.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, text): test belongs to an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, text = marker.args
    entry = _results.setdefault(number, {"text": text, "ok": True, "ran": 0})
    if rep.failed or (rep.skipped and rep.when in ("setup", "call")):
        entry["ok"] = False
    if rep.when == "call":
        entry["ran"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        e = _results[number]
        verdict = "PASS" if e["ok"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {number}: {verdict}  {e['text']} ({e['ran']} tests)")
