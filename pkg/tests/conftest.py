import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

VERDICTS = {}
RUN_LOG = []


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for an acceptance criterion."""

    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {title}" + (f": {detail}" if detail else "")
        VERDICTS[number] = line
        print(line)
        return ok

    return record


@pytest.fixture
def run_log():
    def log(message):
        RUN_LOG.append(message)
        print(message)

    return log


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[key])
    for message in RUN_LOG:
        terminalreporter.write_line(f"note: {message}")
