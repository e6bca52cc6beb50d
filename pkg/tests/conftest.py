import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the acceptance-criterion verdict lines collected during
    the run (if the acceptance module ran)."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERION_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
