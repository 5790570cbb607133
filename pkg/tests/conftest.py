"""Prints one PASS/FAIL line per acceptance criterion at the end of a run."""

ACCEPTANCE_MODULE = "test_acceptance"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    stats = terminalreporter.stats
    rows = []
    for group, status in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in stats.get(group, []):
            nodeid = getattr(report, "nodeid", "")
            if ACCEPTANCE_MODULE not in nodeid:
                continue
            if getattr(report, "when", "call") not in ("call", "setup"):
                continue
            name = nodeid.split("::")[-1]
            rows.append((name, status))
    if not rows:
        return
    try:
        from test_acceptance import CRITERIA
    except ImportError:
        CRITERIA = {}
    terminalreporter.section("acceptance criteria")
    for name, status in sorted(rows):
        label = CRITERIA.get(name, name)
        terminalreporter.write_line(f"[{status}] {label}")
