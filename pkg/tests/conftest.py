import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from distbeam.pipeline import run_pipeline
from distbeam.scenarios import demo_scenario

settings.register_profile(
    "default", deadline=None, max_examples=30,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

RATE = 44100.0


@pytest.fixture(scope="session")
def demo():
    return demo_scenario(seed=7)


@pytest.fixture(scope="session")
def demo_result(demo):
    return run_pipeline(demo)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------------------
# acceptance reporting: one PASS/FAIL line per criterion


def pytest_configure(config):
    config._criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        details = [v for k, v in item.user_properties if k == "detail"]
        item.config._criteria.append(
            (mark.args[0], mark.args[1], rep.passed, rep.duration, "; ".join(details)))


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(getattr(config, "_criteria", []))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed, duration, detail in rows:
        status = "PASS" if passed else "FAIL"
        line = f"criterion {num}: {status}  {title}  ({duration:.1f} s)"
        if detail:
            line += f"  -- {detail}"
        terminalreporter.write_line(line)
