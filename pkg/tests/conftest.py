import os

import pytest
from hypothesis import HealthCheck, settings

from cnumber.ensemble import SpectrumCache, set_cache
from cnumber.model import default_model, make_model
from cnumber.verify import instance

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def fresh_cache():
    """Each test starts from an empty in-memory spectrum cache."""
    old = set_cache(SpectrumCache())
    yield
    set_cache(old)


@pytest.fixture(scope="session")
def default_inst():
    return instance(default_model(), (10, 24, 10))


@pytest.fixture(scope="session")
def small_inst():
    """Default model with small caps (dim 4*7*4 = 112) for dense oracles."""
    return instance(default_model(), (3, 6, 3))


@pytest.fixture(scope="session")
def free_single():
    """One non-interacting zero mode, cap 60."""
    return instance(make_model(4.0, ((0,),), g=0.0, phi=0.0), (60,))


# -- acceptance summary: one pass/fail line per criterion --------------------

_criteria: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        for key, value in report.user_properties:
            if key == "criterion":
                num, text = value
                _criteria[num] = ("PASS" if report.passed else "FAIL", text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        verdict, text = _criteria[num]
        terminalreporter.write_line(f"criterion {num:2d} {verdict}: {text}")
