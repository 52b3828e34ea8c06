"""Zero-diffusion sweep: the eps = 0 baseline against a ladder of eps > 0 runs.

All member runs share grid, time step and initial data; errors are plain
differences of the trajectories at common comparison times.  The rate is a
least-squares fit of ``log(error)`` against ``log(eps)`` where the error
for one rung is ``sup_t (|p^eps - p| + |q^eps - q|)`` in the chosen norm.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DiagnosticsRecord, hk_from_hat, norm_linf
from .dynamics import ModelParams, State
from .errors import BlowupError, ConfigError, DegenerateFitError
from .grid import Grid, make_grid
from .initdata import gen_init
from .integrator import StepSchedule, simulate

log = logging.getLogger(__name__)

NORMS = ("l2", "h1", "h2", "linf")
RATE_WINDOW = (0.45, 1.2)


class ResolutionWarning(UserWarning):
    pass


@dataclass
class SweepConfig:
    grid: Grid
    eps_ladder: tuple[float, ...]
    dt: float
    t_end: float
    seed: int = 0
    amplitude: float = 0.05
    band_limit: int = 8
    params: ModelParams = field(default_factory=ModelParams)
    comparison_times: tuple[float, ...] | None = None
    norms: tuple[str, ...] = NORMS
    stride: int = 1
    cfl_safety: float = 1.0
    workers: int = 1
    nonlinear: bool = True
    initial: State | None = None
    min_rungs: int = 3

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_ladder)
        if len(eps) < self.min_rungs:
            raise ConfigError(f"eps ladder needs at least {self.min_rungs} values")
        if any(not e > 0 for e in eps):
            raise ConfigError("eps ladder values must be strictly positive")
        if len(set(eps)) != len(eps):
            raise ConfigError("eps ladder values must be distinct")
        self.eps_ladder = eps
        unknown = set(self.norms) - set(NORMS)
        if unknown:
            raise ConfigError(f"unknown norms {sorted(unknown)}")
        self.schedule  # validates dt / t_end / stride
        if self.comparison_times is None:
            n = self.schedule.nsteps
            step = max(1, n // 10)
            self.comparison_times = tuple(
                float(j * self.dt) for j in range(step, n + 1, step)
            )
        tc = tuple(float(t) for t in self.comparison_times)
        period = self.dt * self.stride
        for t in tc:
            if not 0 <= t <= self.t_end * (1 + 1e-12):
                raise ConfigError(f"comparison time {t} outside [0, t_end]")
            r = t / period
            if abs(r - round(r)) > 1e-9 * max(1.0, r) and not math.isclose(t, self.t_end):
                raise ConfigError(f"comparison time {t} is not a multiple of dt*stride")
        self.comparison_times = tc
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def schedule(self) -> StepSchedule:
        return StepSchedule(self.dt, self.t_end, self.stride, self.cfl_safety)

    def initial_state(self) -> State:
        if self.initial is not None:
            return self.initial
        return gen_init(self.seed, self.amplitude, self.band_limit, self.grid, self.params)


@dataclass
class MemberRun:
    epsilon: float
    times: np.ndarray
    p: np.ndarray  # (n_times, *sizes)
    q: np.ndarray  # (n_times, dim, *sizes)
    record: DiagnosticsRecord | None
    wall: float


@dataclass
class RateFit:
    slope: float
    intercept: float
    r2: float
    residual: float

    @property
    def in_window(self) -> bool:
        return RATE_WINDOW[0] <= self.slope <= RATE_WINDOW[1]


@dataclass
class SweepResult:
    eps: np.ndarray
    times: np.ndarray
    # every norm in NORMS is measured; ``fits`` covers the configured subset
    # errors[norm] has shape (n_eps, n_times, 2): [..., 0] = theta (p), [..., 1] = psi (q)
    errors: dict[str, np.ndarray]
    sup_errors: dict[str, np.ndarray]
    fits: dict[str, RateFit | None]
    members: list[MemberRun]
    baseline: MemberRun
    manifests: list[dict]

    def monotone(self, slack: float = 0.05) -> bool:
        """Errors non-increasing as eps decreases, for every norm and time."""
        order = np.argsort(self.eps)[::-1]
        for e in self.errors.values():
            tot = e.sum(axis=-1)[order]
            if np.any(tot[1:] > tot[:-1] * (1 + slack)):
                return False
        return True

    def time_uniformity(self, norm: str = "h2") -> float:
        """Spread (max/min) of ``sup_t error / sqrt(eps)`` across the ladder."""
        r = self.sup_errors[norm] / np.sqrt(self.eps)
        return float(np.max(r) / np.min(r))


def fit_rate(eps, errors) -> tuple[float, float, float]:
    """Least-squares fit of ``log(err) = slope*log(eps) + intercept``; returns ``(slope, intercept, r2)``."""
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if eps.shape != errors.shape or eps.size < 3:
        raise DegenerateFitError("rate fit needs at least 3 (eps, error) pairs")
    if np.any(errors <= 0) or np.any(eps <= 0):
        raise DegenerateFitError("rate fit needs strictly positive errors and eps")
    x, y = np.log(eps), np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _fit(eps, errors) -> RateFit:
    slope, intercept, r2 = fit_rate(eps, errors)
    resid = np.log(errors) - (slope * np.log(eps) + intercept)
    return RateFit(slope, intercept, r2, float(np.sqrt(np.mean(resid**2))))


def _run_member(args) -> MemberRun:
    initial, epsilon, schedule, times, nonlinear = args
    t0 = time.perf_counter()
    s0 = initial.copy()
    s0.params = initial.params.with_epsilon(epsilon)
    captured: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    tol = schedule.dt / 2

    def capture(state):
        for i, tc in enumerate(times):
            if abs(state.time - tc) < tol:
                captured[i] = (state.p_tilde.copy(), state.q.copy())

    try:
        _, rec = simulate(s0, schedule, observers=[capture], nonlinear=nonlinear)
    except BlowupError as exc:
        exc.epsilon = epsilon
        raise BlowupError(f"member run eps={epsilon:g} failed: {exc}", exc.time, epsilon) from exc
    missing = [times[i] for i in range(len(times)) if i not in captured]
    if missing:
        raise ConfigError(f"comparison times {missing} were not sampled")
    p = np.stack([captured[i][0] for i in range(len(times))])
    q = np.stack([captured[i][1] for i in range(len(times))])
    return MemberRun(epsilon, np.asarray(times), p, q, rec, time.perf_counter() - t0)


def run_members(initial: State, eps_values, schedule: StepSchedule, times,
                nonlinear: bool = True, workers: int = 1) -> list[MemberRun]:
    """Run one trajectory per eps; results are ordered as ``eps_values``."""
    jobs = [(initial, float(e), schedule, tuple(times), nonlinear) for e in eps_values]
    if workers == 1:
        return [_run_member(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_member, jobs))


def trajectory_errors(grid: Grid, member: MemberRun, baseline: MemberRun, norms=NORMS) -> dict[str, np.ndarray]:
    """Per-time ``(|theta|, |psi|)`` in each norm; shape ``(n_times, 2)`` per norm."""
    out = {n: np.zeros((len(member.times), 2)) for n in norms}
    for i in range(len(member.times)):
        theta = member.p[i] - baseline.p[i]
        psi = member.q[i] - baseline.q[i]
        th_hat, ps_hat = grid.forward(theta), grid.forward(psi)
        for n in norms:
            if n == "linf":
                out[n][i] = norm_linf(grid, theta), norm_linf(grid, psi)
            else:
                k = {"l2": 0, "h1": 1, "h2": 2}[n]
                out[n][i] = hk_from_hat(grid, th_hat, k), hk_from_hat(grid, ps_hat, k)
    return out


def _manifest(m: MemberRun, cfg: SweepConfig) -> dict:
    return {
        "epsilon": m.epsilon,
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "seed": cfg.seed,
        "wall_seconds": m.wall,
        "samples": 0 if m.record is None else len(m.record),
    }


def run_sweep(config: SweepConfig) -> SweepResult:
    initial = config.initial_state()
    eps = np.array(config.eps_ladder)
    members = run_members(
        initial, [0.0, *config.eps_ladder], config.schedule, config.comparison_times,
        config.nonlinear, config.workers,
    )
    baseline, members = members[0], members[1:]
    errors = {n: np.zeros((len(eps), len(config.comparison_times), 2)) for n in NORMS}
    for j, m in enumerate(members):
        e = trajectory_errors(config.grid, m, baseline, NORMS)
        for n in NORMS:
            errors[n][j] = e[n]
    sup_errors = {n: errors[n].sum(axis=-1).max(axis=1) for n in NORMS}
    fits: dict[str, RateFit | None] = {}
    for n in config.norms:
        try:
            fits[n] = _fit(eps, sup_errors[n])
        except DegenerateFitError as exc:
            log.warning("rate fit for %s refused: %s", n, exc)
            fits[n] = None
    result = SweepResult(
        eps=eps,
        times=np.array(config.comparison_times),
        errors=errors,
        sup_errors=sup_errors,
        fits=fits,
        members=members,
        baseline=baseline,
        manifests=[_manifest(m, config) for m in [baseline, *members]],
    )
    for n, f in fits.items():
        if f is not None and not f.in_window:
            log.warning("fitted %s slope %.3f outside %s", n, f.slope, RATE_WINDOW)
    return result


# self-convergence ------------------------------------------------------------


@dataclass
class ConvergenceReport:
    dts: list[float]
    dt_errors: list[float]
    dt_orders: list[float]
    sizes: list[int]
    grid_errors: list[float]


def _orders(errs, ratio=2.0):
    return [
        math.log(errs[i] / errs[i + 1], ratio) if errs[i + 1] > 0 and errs[i] > 0 else float("nan")
        for i in range(len(errs) - 1)
    ]


def _state_diff(grid: Grid, a: State, b: State) -> float:
    d = np.concatenate([(a.p_tilde - b.p_tilde)[None], a.q - b.q])
    return float(np.sqrt(grid.integral_sq(grid.forward(d))))


def temporal_convergence(initial: State, t_end: float, dts, nonlinear: bool = True):
    """Errors of runs at ``dts`` against a run at ``min(dts)/2``; returns ``(errors, orders)``."""
    dts = sorted(dts, reverse=True)
    ref, _ = simulate(initial, StepSchedule(dts[-1] / 2, t_end, stride=10**9),
                      nonlinear=nonlinear, record=False)
    errs = []
    for dt in dts:
        fin, _ = simulate(initial, StepSchedule(dt, t_end, stride=10**9),
                          nonlinear=nonlinear, record=False)
        errs.append(_state_diff(initial.grid, fin, ref))
    orders = _orders(errs)
    if any(errs[i + 1] > errs[i] for i in range(len(errs) - 1)):
        warnings.warn("temporal error not monotone under dt refinement", ResolutionWarning)
    return errs, orders


def _resample_state(state: State, grid: Grid) -> State:
    g0 = state.grid
    p = grid.inverse(g0.resample(g0.forward(state.p_tilde), grid))
    q = grid.inverse(g0.resample(g0.forward(state.q), grid))
    return State(grid, p, q, state.params, state.time)


def spatial_convergence(initial: State, sizes, dt: float, t_end: float,
                        band_limit: int | None = None, nonlinear: bool = True):
    """Errors of coarse-grid runs against the finest grid in ``sizes``.

    ``initial`` lives on the finest grid and is spectrally resampled onto the
    coarser ones.
    """
    sizes = sorted(int(n) for n in sizes)
    g_fine = initial.grid
    if band_limit is not None and band_limit > sizes[0] // 3:
        warnings.warn(
            f"band limit {band_limit} beyond dealias cutoff {sizes[0] // 3} of the "
            f"{sizes[0]}-point grid; data unresolved",
            ResolutionWarning,
        )
    sched = StepSchedule(dt, t_end, stride=10**9)
    ref, _ = simulate(initial, sched, nonlinear=nonlinear, record=False)
    errs = []
    for n in sizes[:-1]:
        g = make_grid(g_fine.dim, (n,) * g_fine.dim, g_fine.extents)
        fin, _ = simulate(_resample_state(initial, g), sched, nonlinear=nonlinear, record=False)
        errs.append(_state_diff(g, fin, _resample_state(ref, g)))
    if any(errs[i + 1] > errs[i] * 1.05 and errs[i] > 1e-12 for i in range(len(errs) - 1)):
        warnings.warn("spatial error not monotone under grid refinement", ResolutionWarning)
    return errs


def self_convergence(config: SweepConfig, epsilon: float | None = None,
                     levels: int = 3) -> ConvergenceReport:
    """dt- and grid-refinement study at one eps (default: the largest of the ladder)."""
    eps = max(config.eps_ladder) if epsilon is None else float(epsilon)
    initial = config.initial_state().copy()
    initial.params = initial.params.with_epsilon(eps)
    dts = [config.dt * 2.0**-j for j in range(levels)]
    dt_errs, dt_orders = temporal_convergence(initial, config.t_end, dts, config.nonlinear)

    n0 = config.grid.sizes[0]
    sizes = [n0 // 2**j for j in range(levels - 1, -1, -1) if n0 // 2**j >= 8]
    grid_errs = spatial_convergence(
        initial, sizes, config.dt, config.t_end, config.band_limit, config.nonlinear
    )
    return ConvergenceReport(dts, dt_errs, dt_orders, sizes, grid_errs)
