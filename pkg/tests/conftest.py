"""Shared fixtures and the acceptance summary printed after the run."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from conicscan.geometry import default_intrinsics

settings.register_profile(
    "properties", max_examples=1000, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("properties")

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    detail = getattr(item, "criterion_detail", "")
    _CRITERIA[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def report(request):
    """Attach a one-line measurement summary to the running criterion."""
    def attach(text: str):
        request.node.criterion_detail = text
        print(text)
    return attach


@pytest.fixture
def intr():
    return default_intrinsics(320, 240)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
