import json
import time
from pathlib import Path

import numpy as np
import pytest

from pulsewave.cylinder import CylinderGrid
from pulsewave.media import homogeneous_medium, laminar7_medium
from pulsewave.wave import minimize

SIGMA0 = 2.0 * np.sqrt(2.0) / 3.0
ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    num, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _criteria[num] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, status, detail = _criteria[num]
        line = f"criterion {num:2d} {status}: {title}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def grid10():
    return CylinderGrid.from_spacing(10.0, 0.02, 16)


@pytest.fixture(scope="session")
def small_grid():
    return CylinderGrid.from_spacing(6.0, 0.05, 8)


@pytest.fixture(scope="session")
def hom():
    return homogeneous_medium()


@pytest.fixture(scope="session")
def lam25():
    return laminar7_medium(0.25, 0.1)


@pytest.fixture(scope="session")
def hom_wave(hom, grid10):
    return minimize(np.array([1.0, 0.0]), hom, grid10)


@pytest.fixture(scope="session")
def lam_wave(lam25, grid10):
    e = np.array([np.cos(np.pi / 4), np.sin(np.pi / 4)])
    return minimize(e, lam25, grid10)


@pytest.fixture(scope="session")
def small_lam_wave(lam25, small_grid):
    e = np.array([np.cos(np.radians(60)), np.sin(np.radians(60))])
    return minimize(e, lam25, small_grid)


BRANCH_THETAS = (-20.0, -10.0, -5.0, 5.0, 10.0, 20.0, 30.0)


@pytest.fixture(scope="session")
def branch_grid():
    return CylinderGrid.from_spacing(4.0, 0.02, 32)


@pytest.fixture(scope="session")
def branch_timed(branch_grid):
    """Laminar branch data (delta=0.01, kappa=0.1) and its wall time; regularized for |theta| <= 15 degrees."""
    from pulsewave.laminar2d import mobility_asymptotics

    t0 = time.perf_counter()
    rows = mobility_asymptotics(BRANCH_THETAS, laminar7_medium(0.01, 0.1), branch_grid,
                                delta_reg=1e-3, reg_below=15.0, hessian=True)
    return {r.theta: r for r in rows}, time.perf_counter() - t0


@pytest.fixture(scope="session")
def branch_rows(branch_timed):
    return branch_timed[0]


@pytest.fixture(scope="session")
def hom_branch_rows(branch_grid):
    from pulsewave.laminar2d import mobility_asymptotics

    rows = mobility_asymptotics((5.0, 10.0, 20.0), homogeneous_medium(), branch_grid,
                                delta_reg=1e-3, reg_below=15.0)
    return {r.theta: r for r in rows}
