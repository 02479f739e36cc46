import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
settings.load_profile("default")

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    key = (mark.args[0], mark.args[1])
    failed = report.failed
    passed = report.passed and report.when == "call"
    prev = _ACCEPTANCE.get(key, {"passed": False, "failed": False, "secs": 0.0})
    prev["failed"] |= failed
    prev["passed"] |= passed
    prev["secs"] += report.duration
    _ACCEPTANCE[key] = prev


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), st in sorted(_ACCEPTANCE.items(), key=lambda kv: str(kv[0][0]).zfill(4)):
        verdict = "FAIL" if st["failed"] or not st["passed"] else "PASS"
        terminalreporter.write_line(f"{verdict}  [{num}] {title}  ({st['secs']:.1f} s)")
