"""Shared pytest configuration.

Every test in tests/test_acceptance.py reports one PASS/FAIL line so the
acceptance run reads as a checklist.
"""
from __future__ import annotations


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] {name}: {outcome}", flush=True)
