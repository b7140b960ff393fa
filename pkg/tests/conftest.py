import numpy as np
import pytest

from mdmap import GeoGrid

from support import make_scene


@pytest.fixture
def rng():
    return np.random.default_rng(20210601)


@pytest.fixture
def small_grid():
    # 0.001-degree pixels, north-up, near 35N/24E
    return GeoGrid(width=12, height=10, origin_x=24.0, origin_y=35.01,
                   pixel_size_x=0.001, pixel_size_y=-0.001)


@pytest.fixture
def quad_scene(small_grid):
    return make_scene(small_grid)


# --------------------------------------------------------------------------
# Acceptance reporting: one PASS/FAIL line per criterion in the summary.

_acceptance_outcomes = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _acceptance_outcomes.append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_outcomes:
        return
    try:
        from test_acceptance import CRITERIA
    except ImportError:
        CRITERIA = {}
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria")
    terminalreporter.write_line("-------------------")
    for name, outcome in _acceptance_outcomes:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {CRITERIA.get(name, name)}")
