"""Shared test plumbing: a per-criterion summary for the acceptance suite."""

from __future__ import annotations


def _criterion_label(nodeid: str) -> str:
    name = nodeid.split("::")[-1]
    if name.startswith("test_"):
        name = name[len("test_") :]
    return name.replace("_", " ")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, ()):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            if getattr(report, "when", "call") not in ("call", None):
                continue
            rows.append((nodeid, outcome == "passed"))
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for nodeid, passed in sorted(rows):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {_criterion_label(nodeid)}")
