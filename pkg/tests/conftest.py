"""Shared fixtures plus a terminal summary for the acceptance suite.

Acceptance tests are named ``test_cNN_*``; after a run that touched any
of them, one PASS/FAIL line per criterion is printed so the checklist
can be read off directly (xfailed cases are reported as expected
failures, not passes)."""

import re
from collections import defaultdict

ACCEPTANCE_NAMES = {
    1: "structural moment form (exact enumeration residuals)",
    2: "closed-form bound dominance",
    3: "alpha2 scaling in n and p",
    4: "message-level round equals blockwise mixing product",
    5: "Monte-Carlo alpha consistency",
    6: "convergence and consensus ceilings hold empirically",
    7: "drop tolerance at p=0.1",
    8: "gradient-averaging degradation",
    9: "averaged-gradient variance scales as sigma^2/n",
    10: "co-location speedup reproduction",
    11: "byte-identical reruns",
}

_results = defaultdict(lambda: defaultdict(int))
_pattern = re.compile(r"test_c(\d{2})")


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    match = _pattern.search(report.nodeid)
    if not match:
        return
    crit = int(match.group(1))
    if hasattr(report, "wasxfail"):
        _results[crit]["xfail" if report.skipped else "xpass"] += 1
    elif report.passed:
        _results[crit]["pass"] += 1
    elif report.failed:
        _results[crit]["fail"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_results):
        counts = _results[crit]
        total = sum(counts.values())
        if counts.get("fail") or counts.get("xpass"):
            verdict = "FAIL"
        elif counts.get("xfail"):
            verdict = "PASS except documented-defect points (expected failures)"
        else:
            verdict = "PASS"
        detail = ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
        tr.write_line(f"[criterion {crit:02d}] {ACCEPTANCE_NAMES[crit]}: {verdict} ({detail}, {total} cases)")
