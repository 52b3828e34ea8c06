"""Hopf-Cole map between Keller-Segel ``(u, c)`` and conservation ``(p, q)`` variables.

``q = -grad ln c`` and ``p = u``.  The map forgets the overall scale of
``c``, so the inverse takes the mean of ``ln c`` as an explicit input.

The parameter scaling (time by ``alpha``, space by ``sqrt(alpha/chi)``,
``q`` by ``sqrt(chi/alpha)``, ``D`` and ``eps`` by ``1/chi``) turns a
Keller-Segel model with general ``chi, alpha`` into the normalized
conservation system.  Spatial rescaling is a relabeling of the grid
extents, so no interpolation is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import KSState, ModelParams, State
from .errors import ConfigError, ConsistencyError, PositivityError, StructureError
from .grid import Grid, make_grid

CURL_TOL = 1e-8
RESIDUAL_TOL = 1e-8


def forward(ks: KSState) -> State:
    g = ks.grid
    cmin = float(np.min(ks.c))
    if not cmin > 0:
        raise PositivityError(f"Hopf-Cole transform needs c > 0 (min c = {cmin:.3e})", time=ks.time)
    q = g.inverse(-g.gradient(g.forward(np.log(ks.c))))
    return State(g, ks.u - ks.params.p_infinity, q, ks.params, ks.time)


def potential(state: State) -> np.ndarray:
    """Spectral potential ``phi_hat`` with ``grad phi = q`` and zero mean."""
    g = state.grid
    q_hat = g.forward(state.q)
    k2 = np.where(g.k2 > 0, g.k2, 1.0)
    phi_hat = np.where(g.k2 > 0, -1j * np.sum(g.k * q_hat, axis=0) / k2, 0.0)
    return phi_hat


def inverse(state: State, normalization: float = 0.0) -> KSState:
    """Reconstruct ``(u, c)`` with ``mean(ln c) = normalization``."""
    if not math.isfinite(normalization):
        raise ConfigError("normalization must be finite")
    g = state.grid
    q_hat = g.forward(state.q)
    scale = 1.0 + float(np.sqrt(g.integral_sq(g.jacobian(q_hat))))
    curl = float(np.sqrt(g.integral_sq(g.curl(q_hat))))
    if curl > CURL_TOL * scale:
        raise StructureError(f"q is not curl-free (|curl q| = {curl:.3e})")
    phi_hat = potential(state)
    # q may carry a mean (k = 0) or Nyquist content that no periodic gradient reproduces
    resid = float(np.sqrt(g.integral_sq(g.gradient(phi_hat) - q_hat)))
    if resid > RESIDUAL_TOL * (1.0 + float(np.sqrt(g.integral_sq(q_hat)))):
        raise ConsistencyError(f"reconstruction residual |grad phi - q| = {resid:.3e}")
    phi = g.inverse(phi_hat) - normalization
    u = state.p_tilde + state.params.p_infinity
    return KSState(g, u, np.exp(-phi), state.params, state.time)


@dataclass(frozen=True)
class Scaling:
    """Rescaling factors: ``t' = time*t``, ``x' = space*x``, ``q' = q_amp*q``; ``p`` unchanged."""

    time: float
    space: float
    q_amp: float


def scaling_factors(params: ModelParams) -> Scaling:
    if not (params.chi > 0 and params.alpha > 0):
        raise ConfigError("scaling needs chi > 0 and alpha > 0")
    return Scaling(
        time=params.alpha,
        space=math.sqrt(params.alpha / params.chi),
        q_amp=math.sqrt(params.chi / params.alpha),
    )


def scale_params(params: ModelParams) -> ModelParams:
    return replace(
        params, D=params.D / params.chi, epsilon=params.epsilon / params.chi, chi=1.0, alpha=1.0
    )


def unscale_params(scaled: ModelParams, chi: float, alpha: float) -> ModelParams:
    if not (chi > 0 and alpha > 0):
        raise ConfigError("scaling needs chi > 0 and alpha > 0")
    return replace(scaled, D=scaled.D * chi, epsilon=scaled.epsilon * chi, chi=chi, alpha=alpha)


def _rescaled_grid(grid: Grid, factor: float) -> Grid:
    return make_grid(grid.dim, grid.sizes, tuple(L * factor for L in grid.extents))


def apply_scaling(params: ModelParams, state: State | None = None):
    """Return ``(scaled_params, scaling, scaled_state)``.

    ``state`` lives in the unscaled coordinates; the scaled state sits on a
    grid whose extents are multiplied by ``scaling.space`` and whose time is
    multiplied by ``scaling.time``.
    """
    sc = scaling_factors(params)
    new_params = scale_params(params)
    if state is None:
        return new_params, sc, None
    g = _rescaled_grid(state.grid, sc.space)
    out = State(g, state.p_tilde.copy(), state.q * sc.q_amp, new_params, state.time * sc.time)
    return new_params, sc, out


def invert_scaling(scaled: ModelParams, chi: float, alpha: float, state: State | None = None):
    """Inverse of :func:`apply_scaling`; returns ``(params, scaled_state_or_None)``."""
    params = unscale_params(scaled, chi, alpha)
    if state is None:
        return params, None
    sc = scaling_factors(params)
    g = _rescaled_grid(state.grid, 1.0 / sc.space)
    out = State(g, state.p_tilde.copy(), state.q / sc.q_amp, params, state.time / sc.time)
    return params, out
