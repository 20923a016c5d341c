import sys
from pathlib import Path

from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, print_blob=True)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, read from the test reports."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if getattr(rep, "when", "call") not in ("call", "setup") or "test_acceptance" not in rep.nodeid:
                continue
            props = dict(getattr(rep, "user_properties", []))
            if "criterion" not in props or (rep.when == "setup" and rep.passed):
                continue
            verdict = "PASS" if rep.passed else "FAIL"
            lines.append((props["criterion"], f"{verdict} {props['criterion']}: {props.get('detail', '')}".rstrip(": ")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
