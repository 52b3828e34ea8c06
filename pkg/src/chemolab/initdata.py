"""Deterministic band-limited initial data.

Random numbers come from numpy's counter-based Philox4x64 bit generator
seeded with the integer seed alone: ``Generator(Philox(seed))``.  Two
standard-normal white-noise fields of the grid shape are drawn in order
(first for ``p~``, then for the potential ``phi``), each projected onto the
integer modes ``0 < |m| <= band_limit`` and normalized to unit L2 norm.
"""
from __future__ import annotations

import numpy as np

from .dynamics import KSState, ModelParams, State
from .errors import ConfigError
from .grid import Grid


def band_mask(grid: Grid, band_limit: int) -> np.ndarray:
    mg = np.meshgrid(
        *[
            np.abs(m[: n // 2 + 1]) if ax == grid.dim - 1 else m
            for ax, (m, n) in enumerate(zip(grid.modes, grid.sizes))
        ],
        indexing="ij",
    )
    m2 = sum(m.astype(float) ** 2 for m in mg)
    return (m2 > 0) & (m2 <= band_limit**2)


def _unit(grid: Grid, F: np.ndarray) -> np.ndarray:
    n = np.sqrt(grid.integral_sq(F))
    return F / n if n > 0 else F


def gen_init(seed: int, amplitude: float, band_limit: int, grid: Grid,
             params: ModelParams | None = None) -> State:
    """Curl-free small-amplitude data with ``|p~_0|^2 = |q_0|^2 = amplitude^2``."""
    params = ModelParams() if params is None else params
    cutoff = min(n // 3 for n in grid.sizes)
    if int(band_limit) != band_limit or band_limit < 1:
        raise ConfigError(f"band_limit must be a positive integer, got {band_limit}")
    if band_limit > cutoff:
        raise ConfigError(f"band_limit {band_limit} beyond dealias cutoff {cutoff}")
    if not np.isfinite(amplitude):
        raise ConfigError("amplitude must be finite")
    rng = np.random.Generator(np.random.Philox(int(seed)))
    mask = band_mask(grid, int(band_limit))
    p_hat = _unit(grid, mask * grid.forward(rng.standard_normal(grid.sizes)))
    phi_hat = mask * grid.forward(rng.standard_normal(grid.sizes))
    q_hat = _unit(grid, grid.gradient(phi_hat))
    return State(grid, amplitude * grid.inverse(p_hat), amplitude * grid.inverse(q_hat), params)


def gen_init_ks(seed: int, amplitude: float, band_limit: int, grid: Grid,
                params: ModelParams | None = None) -> KSState:
    """Keller-Segel data whose Hopf-Cole image is :func:`gen_init`, with mean ln c = 0."""
    from . import hopf_cole

    return hopf_cole.inverse(gen_init(seed, amplitude, band_limit, grid, params), 0.0)
