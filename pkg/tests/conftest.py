import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in range(1, 11):
        ok, detail = RESULTS.get(key, (False, "no result (errored or not run)"))
        terminalreporter.write_line(f"CRITERION {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
