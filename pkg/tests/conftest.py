import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import re

_CRITERIA: dict[str, list[tuple[str, str]]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        m = re.search(r"test_c(\d+)([a-z]?)_", report.nodeid)
        if m:
            _CRITERIA.setdefault(str(int(m.group(1))), []).append((m.group(1) + m.group(2), report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=int):
        parts = _CRITERIA[key]
        ok = all(outcome == "passed" for _, outcome in parts)
        detail = ""
        if len(parts) > 1:
            detail = " (" + ", ".join(f"{p.lstrip('0')} {o}" for p, o in parts) + ")"
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}{detail}")
