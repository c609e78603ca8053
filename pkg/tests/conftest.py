import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

GOLDEN = Path(__file__).parent / "golden"


def pytest_addoption(parser):
    parser.addoption("--regen-golden", action="store_true",
                     help="rewrite golden files from the current implementation")


@pytest.fixture
def regen(request):
    return request.config.getoption("--regen-golden")


@pytest.fixture
def golden(regen):
    """Compare bytes against tests/golden/<name>, or rewrite it under --regen-golden."""

    def check(name, data):
        path = GOLDEN / name
        if regen or not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
            if not regen:
                pytest.fail(f"golden file {name} was missing and has been created; rerun")
        assert data == path.read_bytes(), f"output differs from golden file {name}"

    return check


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance report ------------------------------------------------------------

_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record a measured detail for an acceptance criterion, then assert it."""

    def record(ok, detail):
        _ACCEPTANCE.setdefault(request.node.nodeid, {})["detail"] = detail
        print(f"{'PASS' if ok else 'FAIL'} {request.node.name}: {detail}")
        assert ok, detail

    return record


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid or report.when == "teardown" and report.passed:
        return
    entry = _ACCEPTANCE.setdefault(report.nodeid, {})
    entry["seconds"] = entry.get("seconds", 0.0) + report.duration
    if report.when == "call" or report.failed:
        entry["ok"] = report.passed and entry.get("ok", True)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for nodeid, entry in _ACCEPTANCE.items():
        name = nodeid.split("::")[-1]
        status = "PASS" if entry.get("ok") else "FAIL"
        terminalreporter.write_line(f"{status} {name} [{entry.get('seconds', 0):.1f}s] {entry.get('detail', '')}")
