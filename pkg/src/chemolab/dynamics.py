"""Right-hand sides of the conservation-law system and the Keller-Segel model.

The conservation system is written for the perturbation ``p~ = p - p_inf``:

    p~_t = D lap p~ + p_inf div q + div(p~ q)
    q_t  = grad p~ + eps lap q - eps grad |q|^2

Everything linear goes into :func:`linear_block` and is integrated exactly;
the two quadratic terms are evaluated pseudo-spectrally.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import BlowupError, ConfigError, PositivityError
from .grid import Grid

MODEL_TAGS = ("diffusive", "nondiffusive", "keller_segel")

C_FLOOR = 1e-8


@dataclass(frozen=True)
class ModelParams:
    D: float = 1.0
    epsilon: float = 0.0
    p_infinity: float = 1.0
    chi: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if not self.D > 0:
            raise ConfigError(f"D must be positive, got {self.D}")
        if not self.epsilon >= 0:
            raise ConfigError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not self.p_infinity > 0:
            raise ConfigError(f"p_infinity must be positive, got {self.p_infinity}")
        # chi = alpha = 0 is allowed: Keller-Segel then decouples into heat flows
        if not (self.chi >= 0 and self.alpha >= 0):
            raise ConfigError("chi and alpha must be nonnegative")

    @property
    def model_tag(self) -> str:
        return "nondiffusive" if self.epsilon == 0 else "diffusive"

    def with_epsilon(self, epsilon: float) -> "ModelParams":
        return replace(self, epsilon=float(epsilon))


@dataclass
class State:
    """Conservation-law state ``(p~, q)`` at one time instant."""

    grid: Grid
    p_tilde: np.ndarray
    q: np.ndarray
    params: ModelParams
    time: float = 0.0

    def __post_init__(self):
        self.p_tilde = np.asarray(self.p_tilde, dtype=float)
        self.q = np.asarray(self.q, dtype=float).reshape((self.grid.dim,) + self.grid.sizes)
        if self.p_tilde.shape != self.grid.sizes:
            raise ValueError("p_tilde does not match grid shape")

    @property
    def model_tag(self) -> str:
        return self.params.model_tag

    def copy(self) -> "State":
        return State(self.grid, self.p_tilde.copy(), self.q.copy(), self.params, self.time)

    @classmethod
    def zeros(cls, grid: Grid, params: ModelParams, time: float = 0.0) -> "State":
        return cls(grid, np.zeros(grid.sizes), np.zeros((grid.dim,) + grid.sizes), params, time)


@dataclass
class KSState:
    """Keller-Segel state: cell density ``u`` and chemical concentration ``c``."""

    grid: Grid
    u: np.ndarray
    c: np.ndarray
    params: ModelParams
    time: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        if self.u.shape != self.grid.sizes or self.c.shape != self.grid.sizes:
            raise ValueError("u and c must match grid shape")

    model_tag = "keller_segel"

    def copy(self) -> "KSState":
        return KSState(self.grid, self.u.copy(), self.c.copy(), self.params, self.time)


def _check_finite(time: float, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise BlowupError("non-finite field", time=time)


# conservation system ------------------------------------------------------


def conservation_nonlinear_hat(
    grid: Grid, params: ModelParams, p_hat: np.ndarray, q_hat: np.ndarray, time: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Dealiased spectral nonlinear terms ``(div(p~ q), -eps grad |q|^2)``."""
    p = grid.inverse(p_hat)
    q = grid.inverse(q_hat)
    _check_finite(time, p, q)
    dp_hat = grid.dealias(grid.divergence(grid.forward(p * q)))
    if params.epsilon == 0:
        dq_hat = np.zeros_like(q_hat)
    else:
        q2_hat = grid.forward(np.sum(q * q, axis=0))
        dq_hat = grid.dealias(-params.epsilon * grid.gradient(q2_hat))
    return dp_hat, dq_hat


def nonlinear_rhs_conservation(state: State) -> tuple[np.ndarray, np.ndarray]:
    """Nonlinear part of the conservation system evaluated in physical space."""
    g = state.grid
    _check_finite(state.time, state.p_tilde, state.q)
    dp_hat, dq_hat = conservation_nonlinear_hat(
        g, state.params, g.forward(state.p_tilde), g.forward(state.q), state.time
    )
    return g.inverse(dp_hat), g.inverse(dq_hat)


def linear_block(k, params: ModelParams) -> tuple[np.ndarray, float]:
    """Per-mode linear operator of the conservation system.

    ``q_hat`` is split into a longitudinal amplitude along ``k`` and a
    transverse remainder.  With the longitudinal amplitude scaled as
    ``sqrt(p_inf) * (k/|k|) . q_hat`` the coupling is symmetric and the
    ``(p_hat, longitudinal)`` pair evolves under

        [[-D|k|^2,            i sqrt(p_inf)|k|],
         [i sqrt(p_inf)|k|,  -eps|k|^2       ]]

    while every transverse component decays at rate ``-eps|k|^2``.
    Returns ``(block, transverse_rate)``; both vanish at ``k = 0``.
    """
    kk = float(np.sqrt(np.sum(np.square(k))))
    c = np.sqrt(params.p_infinity) * kk
    block = np.array(
        [[-params.D * kk**2, 1j * c], [1j * c, -params.epsilon * kk**2]], dtype=complex
    )
    return block, -params.epsilon * kk**2


# Keller-Segel -------------------------------------------------------------


def _check_positive(c: np.ndarray, time: float, c_floor: float) -> None:
    cmin = float(np.min(c))
    if not cmin >= c_floor:
        raise PositivityError(f"concentration min {cmin:.3e} below floor {c_floor:.1e}", time=time)


def ks_nonlinear_hat(
    grid: Grid,
    params: ModelParams,
    u_hat: np.ndarray,
    c_hat: np.ndarray,
    time: float = 0.0,
    c_floor: float = C_FLOOR,
) -> tuple[np.ndarray, np.ndarray]:
    """Dealiased ``(-chi div(u grad ln c), -alpha u c)`` in spectral space."""
    u = grid.inverse(u_hat)
    c = grid.inverse(c_hat)
    _check_finite(time, u, c)
    _check_positive(c, time, c_floor)
    grad_lnc = grid.inverse(grid.gradient(grid.forward(np.log(c))))
    du_hat = grid.dealias(-params.chi * grid.divergence(grid.forward(u * grad_lnc)))
    dc_hat = grid.dealias(-params.alpha * grid.forward(u * c))
    return du_hat, dc_hat


def ks_rhs(state: KSState, c_floor: float = C_FLOOR) -> tuple[np.ndarray, np.ndarray]:
    """Full Keller-Segel right-hand side ``(u_t, c_t)`` at ``state``."""
    g, prm = state.grid, state.params
    u_hat, c_hat = g.forward(state.u), g.forward(state.c)
    du_hat, dc_hat = ks_nonlinear_hat(g, prm, u_hat, c_hat, state.time, c_floor)
    du_hat = du_hat + prm.D * g.laplacian(u_hat)
    dc_hat = dc_hat + prm.epsilon * g.laplacian(c_hat)
    return g.inverse(du_hat), g.inverse(dc_hat)
