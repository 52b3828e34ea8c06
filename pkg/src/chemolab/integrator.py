"""Integrating-factor RK4 time stepping with exact per-mode linear propagators.

For the conservation system the linear part couples ``p_hat`` with the
longitudinal part of ``q_hat`` through a 2x2 block per wavenumber (see
:func:`chemolab.dynamics.linear_block`); transverse parts of ``q_hat`` decay
at ``-eps|k|^2``.  The block exponential is evaluated in closed form, so the
same code path covers ``eps = 0`` without any special casing.

The Keller-Segel model has a diagonal linear part (heat operators for ``u``
and ``c``) and is stepped with the same IFRK4 skeleton.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import dynamics
from .dynamics import C_FLOOR, KSState, ModelParams, State
from .errors import BlowupError, CFLError, ConfigError
from .grid import Grid

log = logging.getLogger(__name__)

BLOWUP_LINF = 1e6
EIG_GAP_TOL = 1e-8


def block_expm(k_abs, params: ModelParams, t: float) -> np.ndarray:
    """``exp(t * block)`` for the 2x2 linear block, vectorized over ``|k|``.

    Returns an array of shape ``(2, 2, *k_abs.shape)``.  The eigenvalues are
    ``m +/- s`` with ``m = -(D+eps)|k|^2/2`` and
    ``s = sqrt(((D-eps)|k|^2/2)^2 - p_inf |k|^2)``; when they are within
    ``EIG_GAP_TOL`` of each other a Taylor expansion in ``s`` replaces the
    closed form.
    """
    shape = np.shape(k_abs)
    kk = np.atleast_1d(np.asarray(k_abs, dtype=float))
    D, eps = params.D, params.epsilon
    a = -D * kk**2
    d = -eps * kk**2
    b = 1j * math.sqrt(params.p_infinity) * kk
    m = 0.5 * (a + d)
    h = 0.5 * (a - d)
    s = np.sqrt((h**2 + b**2).astype(complex))
    z = s * t
    gap = 2 * np.abs(s)

    # E = e^{mt} [cosh(z) I + t sinhc(z) (A - mI)],  A - mI = [[h, b], [b, -h]]
    small = gap < EIG_GAP_TOL
    mid = (~small) & (np.abs(z) < 1.0)
    big = ~(small | mid)

    cosh = np.empty_like(z)
    sinhc = np.empty_like(z)
    cosh[small] = 1 + z[small] ** 2 / 2
    sinhc[small] = 1 + z[small] ** 2 / 6
    cosh[mid] = np.cosh(z[mid])
    sinhc[mid] = np.sinh(z[mid]) / z[mid]

    em = np.exp(m * t)
    E = np.empty((2, 2) + kk.shape, dtype=complex)
    E[0, 0] = em * (cosh + t * sinhc * h)
    E[1, 1] = em * (cosh - t * sinhc * h)
    E[0, 1] = E[1, 0] = em * t * sinhc * b

    if np.any(big):
        # Separate eigen-exponentials avoid overflow of cosh/sinh for large |z|.
        sb, mb, hb, bb = s[big], m[big], h[big], b[big]
        ep = np.exp((mb + sb) * t)
        en = np.exp((mb - sb) * t)
        c_ = 0.5 * (ep + en)
        sh = (ep - en) / (2 * sb)
        E[0, 0][big] = c_ + sh * hb
        E[1, 1][big] = c_ - sh * hb
        E[0, 1][big] = sh * bb
        E[1, 0][big] = sh * bb
    return E.reshape((2, 2) + shape)


class PropagatorTable:
    """Exact linear propagators of the conservation system for steps ``dt`` and ``dt/2``.

    Immutable after construction; safe to share between threads.
    """

    def __init__(self, grid: Grid, params: ModelParams, dt: float):
        if not dt > 0:
            raise ConfigError(f"dt must be positive, got {dt}")
        self.grid = grid
        self.params = params
        self.dt = float(dt)
        kabs = np.sqrt(grid.k2)
        with np.errstate(invalid="ignore", divide="ignore"):
            khat = np.where(kabs > 0, grid.k / np.where(kabs > 0, kabs, 1.0), 0.0)
        self.khat = khat
        self.sqrt_pinf = math.sqrt(params.p_infinity)
        self.full = block_expm(kabs, params, self.dt)
        self.half = block_expm(kabs, params, self.dt / 2)
        self.trans_full = np.exp(-params.epsilon * grid.k2 * self.dt)
        self.trans_half = np.exp(-params.epsilon * grid.k2 * self.dt / 2)
        for a in (self.full, self.half, self.trans_full, self.trans_half, self.khat):
            a.setflags(write=False)

    def apply(self, p_hat: np.ndarray, q_hat: np.ndarray, half: bool = False):
        E = self.half if half else self.full
        et = self.trans_half if half else self.trans_full
        along = np.sum(self.khat * q_hat, axis=0)
        trans = q_hat - self.khat * along
        ell = self.sqrt_pinf * along
        p_new = E[0, 0] * p_hat + E[0, 1] * ell
        ell_new = E[1, 0] * p_hat + E[1, 1] * ell
        q_new = self.khat * (ell_new / self.sqrt_pinf) + et * trans
        return p_new, q_new


def build_propagators(grid: Grid, params: ModelParams, dt: float) -> PropagatorTable:
    return PropagatorTable(grid, params, dt)


class KSPropagatorTable:
    """Diagonal heat propagators for ``u`` (rate ``-D|k|^2``) and ``c`` (``-eps|k|^2``)."""

    def __init__(self, grid: Grid, params: ModelParams, dt: float):
        if not dt > 0:
            raise ConfigError(f"dt must be positive, got {dt}")
        self.grid, self.params, self.dt = grid, params, float(dt)
        self.u_full = np.exp(-params.D * grid.k2 * dt)
        self.u_half = np.exp(-params.D * grid.k2 * dt / 2)
        self.c_full = np.exp(-params.epsilon * grid.k2 * dt)
        self.c_half = np.exp(-params.epsilon * grid.k2 * dt / 2)

    def apply(self, u_hat, c_hat, half: bool = False):
        if half:
            return self.u_half * u_hat, self.c_half * c_hat
        return self.u_full * u_hat, self.c_full * c_hat


def _ifrk4(v, dt, prop, nonlinear):
    """One integrating-factor RK4 step on a pair of spectral arrays."""
    k1 = [dt * n for n in nonlinear(v, 0.0)]
    v2 = prop.apply(*(a + b / 2 for a, b in zip(v, k1)), half=True)
    k2 = [dt * n for n in nonlinear(v2, 0.5)]
    ev = prop.apply(*v, half=True)
    v3 = tuple(a + b / 2 for a, b in zip(ev, k2))
    k3 = [dt * n for n in nonlinear(v3, 0.5)]
    e2v = prop.apply(*v)
    ek3 = prop.apply(*k3, half=True)
    v4 = tuple(a + b for a, b in zip(e2v, ek3))
    k4 = [dt * n for n in nonlinear(v4, 1.0)]
    ek1 = prop.apply(*k1)
    ek23 = prop.apply(*(a + b for a, b in zip(k2, k3)), half=True)
    return tuple(
        a + (b + 2 * c + d) / 6 for a, b, c, d in zip(e2v, ek1, ek23, k4)
    )


def _conservation_nl(grid, params, t0, dt, enabled=True):
    if not enabled:
        return lambda v, frac: (np.zeros_like(v[0]), np.zeros_like(v[1]))
    return lambda v, frac: dynamics.conservation_nonlinear_hat(
        grid, params, v[0], v[1], t0 + frac * dt
    )


def _ks_nl(grid, params, t0, dt, c_floor, enabled=True):
    if not enabled:
        return lambda v, frac: (np.zeros_like(v[0]), np.zeros_like(v[1]))
    return lambda v, frac: dynamics.ks_nonlinear_hat(
        grid, params, v[0], v[1], t0 + frac * dt, c_floor
    )


def step(state, propagators, dt: float | None = None, nonlinear: bool = True,
         c_floor: float = C_FLOOR):
    """Advance ``state`` (a :class:`State` or :class:`KSState`) by one step."""
    dt = propagators.dt if dt is None else float(dt)
    if not math.isclose(dt, propagators.dt, rel_tol=1e-14):
        raise ConfigError(f"propagators were built for dt={propagators.dt}, not {dt}")
    g = state.grid
    if isinstance(state, KSState):
        v = (g.forward(state.u), g.forward(state.c))
        nl = _ks_nl(g, state.params, state.time, dt, c_floor, nonlinear)
    else:
        v = (g.forward(state.p_tilde), g.forward(state.q))
        nl = _conservation_nl(g, state.params, state.time, dt, nonlinear)
    a, b = _ifrk4(v, dt, propagators, nl)
    t_new = state.time + dt
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise BlowupError("non-finite state", time=t_new, epsilon=state.params.epsilon)
    out = state.copy()
    out.time = t_new
    if isinstance(state, KSState):
        out.u, out.c = g.inverse(a), g.inverse(b)
    else:
        out.p_tilde, out.q = g.inverse(a), g.inverse(b)
        if np.max(np.abs(out.p_tilde)) > BLOWUP_LINF:
            raise BlowupError("|p~| exceeded 1e6", time=t_new, epsilon=state.params.epsilon)
    return out


@dataclass(frozen=True)
class StepSchedule:
    dt: float
    t_end: float
    stride: int = 1
    cfl_safety: float = 1.0

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise ConfigError("dt and t_end must be positive")
        if self.dt > self.t_end * (1 + 1e-12):
            raise ConfigError("dt must not exceed t_end")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ConfigError("stride must be a positive integer")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must lie in (0, 1]")
        n = self.t_end / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError(f"t_end={self.t_end} is not a multiple of dt={self.dt}")

    @property
    def nsteps(self) -> int:
        return int(round(self.t_end / self.dt))


def cfl_advisory(state: State, dt: float, grid: Grid | None = None) -> float:
    """Advective CFL ratio ``dt * (max|q| + sqrt(max|p~|)) / min(dx)``.

    The linear waves are integrated exactly, so only the nonlinear transport
    speeds enter.
    """
    grid = state.grid if grid is None else grid
    if isinstance(state, KSState):
        q = grid.inverse(-grid.gradient(grid.forward(np.log(state.c))))
        p = state.u - state.params.p_infinity
    else:
        q, p = state.q, state.p_tilde
    qmax = float(np.max(np.sqrt(np.sum(q * q, axis=0)))) if q.size else 0.0
    speed = qmax + math.sqrt(float(np.max(np.abs(p))))
    return dt * speed / min(grid.spacing)


Observer = Callable[[object], None]


def simulate(
    initial,
    schedule: StepSchedule,
    observers: Iterable[Observer] = (),
    nonlinear: bool = True,
    record: bool = True,
    propagators=None,
    c_floor: float = C_FLOOR,
):
    """Run from ``initial`` to ``schedule.t_end``.

    Observers are called with the physical state at t=0 and after every
    ``schedule.stride`` steps.  Returns ``(final_state, DiagnosticsRecord)``;
    the record is ``None`` when ``record`` is false.
    """
    from .diagnostics import Recorder

    g = initial.grid
    prm = initial.params
    dt = schedule.dt
    ks = isinstance(initial, KSState)
    if propagators is None:
        propagators = (KSPropagatorTable if ks else PropagatorTable)(g, prm, dt)
    elif not math.isclose(propagators.dt, dt, rel_tol=1e-14):
        raise ConfigError("propagator table built for a different dt")

    observers = list(observers)
    recorder = None
    if record:
        recorder = Recorder(nonlinear=nonlinear)
        observers.insert(0, recorder)

    raw = (initial.u, initial.c) if ks else (initial.p_tilde, initial.q)
    if not all(np.all(np.isfinite(a)) for a in raw):
        raise BlowupError("non-finite initial state", time=initial.time, epsilon=prm.epsilon)
    v = tuple(g.forward(a) for a in raw)
    if not ks:
        from .diagnostics import curl_mass_monitor, norm_l2_grad_vector

        curl0, _ = curl_mass_monitor(initial)
        if curl0 > 1e-10 * (1 + norm_l2_grad_vector(g, v[1])):
            log.warning("initial q is not curl-free (|curl q| = %.3e)", curl0)

    def materialize(v, t):
        s = initial.copy()
        s.time = t
        if ks:
            s.u, s.c = g.inverse(v[0]), g.inverse(v[1])
        else:
            s.p_tilde, s.q = g.inverse(v[0]), g.inverse(v[1])
        return s

    def check(s):
        arrays = (s.u, s.c) if ks else (s.p_tilde, s.q)
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise BlowupError("non-finite state", time=s.time, epsilon=prm.epsilon)
        if not ks and np.max(np.abs(s.p_tilde)) > BLOWUP_LINF:
            raise BlowupError("|p~| exceeded 1e6", time=s.time, epsilon=prm.epsilon)
        ratio = cfl_advisory(s, dt)
        if ratio > schedule.cfl_safety:
            raise CFLError(
                f"CFL ratio {ratio:.3g} exceeds safety {schedule.cfl_safety}",
                time=s.time, epsilon=prm.epsilon,
            )

    state = materialize(v, initial.time)
    check(state)
    for obs in observers:
        obs(state)

    t0 = initial.time
    for n in range(1, schedule.nsteps + 1):
        t_prev = t0 + (n - 1) * dt
        nl = (
            _ks_nl(g, prm, t_prev, dt, c_floor, nonlinear)
            if ks
            else _conservation_nl(g, prm, t_prev, dt, nonlinear)
        )
        v = _ifrk4(v, dt, propagators, nl)
        if not (np.all(np.isfinite(v[0])) and np.all(np.isfinite(v[1]))):
            raise BlowupError("non-finite state", time=t0 + n * dt, epsilon=prm.epsilon)
        if n % schedule.stride == 0 or n == schedule.nsteps:
            state = materialize(v, t0 + n * dt)
            check(state)
            for obs in observers:
                obs(state)

    state = materialize(v, t0 + schedule.nsteps * dt)
    rec = recorder.finalize(prm, ks=ks) if recorder is not None else None
    return state, rec
