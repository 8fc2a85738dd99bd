"""Shared pytest hooks: echo the acceptance summary after the run."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "_RESULTS", None) if mod else None
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance summary")
    for num, ok, detail in sorted(results):
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d}: {verdict} - {detail}")
