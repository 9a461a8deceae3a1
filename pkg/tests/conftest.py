"""Shared pytest configuration.

Numerical oracles live in the test modules that use them, computed from
primitive inputs (matrices, closed forms) rather than from the code under
test.  Here we only pin down hypothesis behavior so property tests are
reproducible run to run, and collect the acceptance verdict lines so they
survive output capture and appear in the terminal summary.
"""
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    derandomize=True,
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# PASS/FAIL lines appended by tests/test_acceptance.py, one per criterion.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
