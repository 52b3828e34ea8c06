import numpy as np
import pytest

from chemolab.dynamics import ModelParams
from chemolab.grid import make_grid

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def grid1d():
    return make_grid(1, [64])


@pytest.fixture
def grid2d():
    return make_grid(2, [32, 32])


@pytest.fixture
def grid3d():
    return make_grid(3, [16, 16, 16])


@pytest.fixture
def params():
    return ModelParams(D=1.0, epsilon=0.05)


def band_limited(grid, rng, band=4, ncomp=None):
    """Random real field(s) containing only integer modes |m| <= band."""
    shape = grid.sizes if ncomp is None else (ncomp,) + grid.sizes
    F = grid.forward(rng.standard_normal(shape))
    keep = np.ones(grid.spectral_shape, dtype=bool)
    for ax in range(grid.dim):
        m = np.abs(grid.modes[ax])
        if ax == grid.dim - 1:
            m = m[: grid.sizes[ax] // 2 + 1]
        sl = [np.newaxis] * grid.dim
        sl[ax] = slice(None)
        keep &= (m <= band)[tuple(sl)]
    return grid.inverse(F * keep)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
