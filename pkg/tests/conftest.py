import numpy as np
import pytest

from giladar.geometry import GridSpec, OpticsConfig

ACCEPTANCE_RESULTS = []


@pytest.fixture
def small_cfg():
    return OpticsConfig(grid_nx=16, grid_ny=16, n_slices=16)


@pytest.fixture
def small_grid(small_cfg):
    return GridSpec.from_config(small_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
