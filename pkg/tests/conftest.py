import numpy as np
import pytest

from curvedflats.algebra import sun_son
from curvedflats.config import load_config
from curvedflats.dressing import dress, loop_from_config
from curvedflats.grid import Grid


@pytest.fixture(scope="session")
def pair3():
    return sun_son(3)


@pytest.fixture(scope="session")
def default_cfg():
    return load_config()


@pytest.fixture(scope="session")
def default_loop(default_cfg):
    return loop_from_config(default_cfg.loop, default_cfg.pair)


@pytest.fixture(scope="session")
def default_solution(default_cfg, default_loop):
    return dress(default_loop, default_cfg.pair, default_cfg.grid)


@pytest.fixture(scope="session")
def small_grid():
    return Grid.square(1.6, 33)


@pytest.fixture(scope="session")
def small_solution(default_loop, pair3, small_grid):
    return dress(default_loop, pair3, small_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fine_solution(default_cfg, default_loop):
    return dress(default_loop, default_cfg.pair, default_cfg.grid.refine())


def interior_max(field, grid, margin=0.2):
    """Largest node magnitude (Frobenius for matrices) away from the faces."""
    F = np.asarray(field)
    mags = np.linalg.norm(F, axis=(-2, -1)) if F.ndim == grid.r + 2 else np.abs(F)
    return float(np.max(mags[grid.interior(margin)]))


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
