"""Norms, invariant monitors and the L2 energy ledger.

Energy ledger
-------------
For the conservation system (and the Hopf-Cole image of the Keller-Segel
model with sensitivity ``chi`` and consumption ``alpha``; both equal 1 for
the conservation system) the weighted energy

    E(t) = |p~|^2 / (chi p_inf) + |q|^2 / alpha

obeys

    E(t) + 2D/(chi p_inf) int |grad p~|^2 + 2 eps/alpha int |grad q|^2
        = E(0) - 2/p_inf int int p~ q . grad p~ - 2 eps/alpha int int q . grad|q|^2

The two dissipation integrals are reported as ``diss_p_acc`` and
``diss_q_acc``; the nonlinear work terms on the right as ``nl_p_acc`` and
``nl_q_acc``.  Time integrals use cumulative Simpson quadrature on the
recorded samples, so the ledger is independent of the integrator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .dynamics import KSState, ModelParams, State
from .grid import Grid

CSV_COLUMNS = (
    "t", "l2_p", "l2_q", "h1_p", "h1_q", "h2_p", "h2_q", "h3_p", "h3_q",
    "linf_p", "linf_q", "l2_divq", "l2_gradq", "l2_curlq", "mass_p",
    "diss_p_acc", "diss_q_acc", "ledger_residual",
)

# per-sample integrands kept alongside the CSV columns
_EXTRA = ("l2_gradp", "gradp_sq", "gradq_sq", "nl_p", "nl_q", "energy",
          "nl_p_acc", "nl_q_acc")


def _is_vector(grid: Grid, f: np.ndarray) -> bool:
    return f.ndim == grid.dim + 1


def norm_l2(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(grid.integral_sq(grid.forward(f))))


def norm_linf(grid: Grid, f: np.ndarray) -> float:
    """Max absolute value; pointwise Euclidean magnitude for vector fields."""
    f = np.asarray(f)
    if f.size == 0:
        return 0.0
    if _is_vector(grid, f):
        return float(np.max(np.sqrt(np.sum(f * f, axis=0))))
    return float(np.max(np.abs(f)))


def hk_from_hat(grid: Grid, F: np.ndarray, k: int) -> float:
    """``sqrt(sum_{j<=k} |D^j f|^2)`` with ``|D^j f|^2 = int |k|^{2j} |f_hat|^2``."""
    if k not in (0, 1, 2, 3):
        raise ValueError(f"Sobolev order must be 0..3, got {k}")
    weight = sum(grid.k2**j for j in range(k + 1))
    return float(np.sqrt(grid.integral_sq(np.sqrt(weight) * F)))


def norm_hk(grid: Grid, f: np.ndarray, k: int) -> float:
    return hk_from_hat(grid, grid.forward(f), k)


def norm_l2_grad_vector(grid: Grid, q_hat: np.ndarray) -> float:
    """``|grad q|_2`` over all components ``d_i q_j``."""
    return float(np.sqrt(grid.integral_sq(grid.jacobian(q_hat))))


def divcurl_identity_check(grid: Grid, q: np.ndarray) -> tuple[float, float]:
    """Return ``(|grad q|_2, |div q|_2)``; equal for curl-free ``q``."""
    q_hat = grid.forward(q)
    return (
        norm_l2_grad_vector(grid, q_hat),
        float(np.sqrt(grid.integral_sq(grid.divergence(q_hat)))),
    )


def curl_mass_monitor(state: State) -> tuple[float, float]:
    g = state.grid
    q_hat = g.forward(state.q)
    curl = float(np.sqrt(g.integral_sq(g.curl(q_hat))))
    mass = g.mean(g.forward(state.p_tilde)) * g.volume
    return curl, mass


def nonlinear_ledger_crosscheck(state: State) -> tuple[float, float]:
    """``int p~ q . grad p~`` evaluated directly and as ``-1/2 int p~^2 div q``."""
    g = state.grid
    p, q = state.p_tilde, state.q
    grad_p = g.inverse(g.gradient(g.forward(p)))
    div_q = g.inverse(g.divergence(g.forward(q)))
    dv = g.volume / g.npoints
    direct = float(np.sum(p * np.sum(q * grad_p, axis=0))) * dv
    by_parts = -0.5 * float(np.sum(p * p * div_q)) * dv
    return direct, by_parts


def ledger_weights(params: ModelParams, ks: bool = False) -> dict[str, float]:
    chi, alpha = (params.chi, params.alpha) if ks else (1.0, 1.0)
    if chi == 0 or alpha == 0:
        # decoupled heat flows: no balanced weighting exists, residual is not meaningful
        chi, alpha = 1.0, 1.0
    pinf = params.p_infinity
    return {
        "wp": 1.0 / (chi * pinf),
        "wq": 1.0 / alpha,
        "diss_p": 2.0 * params.D / (chi * pinf),
        "diss_q": 2.0 * params.epsilon / alpha,
        "nl_p": -2.0 / pinf,
        "nl_q": -2.0 * params.epsilon / alpha,
    }


@dataclass
class DiagnosticsRecord:
    """Time series of norms and ledger terms; one entry per sample."""

    data: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def empty(cls) -> "DiagnosticsRecord":
        return cls({c: np.zeros(0) for c in CSV_COLUMNS + _EXTRA})

    def __len__(self) -> int:
        return len(self.data.get("t", ()))

    def __getitem__(self, key: str) -> np.ndarray:
        return self.data[key]

    @property
    def t(self) -> np.ndarray:
        return self.data["t"]


def sample_state(state) -> dict[str, float]:
    """All per-sample diagnostics of a conservation or Keller-Segel state.

    Keller-Segel states are measured through their Hopf-Cole image.
    """
    g = state.grid
    if isinstance(state, KSState):
        p = state.u - state.params.p_infinity
        p_hat = g.forward(p)
        q_hat = -g.gradient(g.forward(np.log(state.c)))
        q = g.inverse(q_hat)
    else:
        p, q = state.p_tilde, state.q
        p_hat, q_hat = g.forward(p), g.forward(q)

    gp_hat = g.gradient(p_hat)
    gradp_sq = g.integral_sq(gp_hat)
    gradq_sq = g.integral_sq(g.jacobian(q_hat))
    divq_sq = g.integral_sq(g.divergence(q_hat))
    curl_sq = g.integral_sq(g.curl(q_hat))

    dv = g.volume / g.npoints
    grad_p = g.inverse(gp_hat)
    q2 = np.sum(q * q, axis=0)
    grad_q2 = g.inverse(g.gradient(g.forward(q2)))
    nl_p = float(np.sum(p * np.sum(q * grad_p, axis=0))) * dv
    nl_q = float(np.sum(q * grad_q2)) * dv

    l2p_sq = g.integral_sq(p_hat)
    l2q_sq = g.integral_sq(q_hat)
    out = {
        "t": float(state.time),
        "l2_p": np.sqrt(l2p_sq),
        "l2_q": np.sqrt(l2q_sq),
        "h1_p": hk_from_hat(g, p_hat, 1),
        "h1_q": hk_from_hat(g, q_hat, 1),
        "h2_p": hk_from_hat(g, p_hat, 2),
        "h2_q": hk_from_hat(g, q_hat, 2),
        "h3_p": hk_from_hat(g, p_hat, 3),
        "h3_q": hk_from_hat(g, q_hat, 3),
        "linf_p": norm_linf(g, p),
        "linf_q": norm_linf(g, q),
        "l2_divq": np.sqrt(divq_sq),
        "l2_gradq": np.sqrt(gradq_sq),
        "l2_curlq": np.sqrt(curl_sq),
        "mass_p": g.mean(p_hat) * g.volume,
        "l2_gradp": np.sqrt(gradp_sq),
        "gradp_sq": gradp_sq,
        "gradq_sq": gradq_sq,
        "nl_p": nl_p,
        "nl_q": nl_q,
        "l2p_sq": l2p_sq,
        "l2q_sq": l2q_sq,
    }
    return out


class Recorder:
    """Observer accumulating samples; :meth:`finalize` produces the record."""

    def __init__(self, nonlinear: bool = True):
        self.nonlinear = nonlinear
        self.samples: list[dict[str, float]] = []

    def __call__(self, state) -> None:
        s = sample_state(state)
        if self.samples and not s["t"] > self.samples[-1]["t"]:
            raise ValueError("diagnostic samples must have strictly increasing time")
        self.samples.append(s)

    def finalize(self, params: ModelParams, ks: bool = False) -> DiagnosticsRecord:
        return build_record(self.samples, params, ks=ks, nonlinear=self.nonlinear)


def _cumulative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    if len(t) < 2:
        return np.zeros_like(y)
    if len(t) == 2:
        return np.concatenate([[0.0], [0.5 * (y[0] + y[1]) * (t[1] - t[0])]])
    return cumulative_simpson(y, x=t, initial=0.0)


def build_record(samples, params: ModelParams, ks: bool = False,
                 nonlinear: bool = True) -> DiagnosticsRecord:
    if not samples:
        return DiagnosticsRecord.empty()
    cols = {key: np.array([s[key] for s in samples], dtype=float) for key in samples[0]}
    t = cols["t"]
    w = ledger_weights(params, ks=ks)
    energy = w["wp"] * cols.pop("l2p_sq") + w["wq"] * cols.pop("l2q_sq")
    cols["energy"] = energy
    cols["diss_p_acc"] = w["diss_p"] * _cumulative(cols["gradp_sq"], t)
    cols["diss_q_acc"] = w["diss_q"] * _cumulative(cols["gradq_sq"], t)
    if nonlinear:
        cols["nl_p_acc"] = w["nl_p"] * _cumulative(cols["nl_p"], t)
        cols["nl_q_acc"] = w["nl_q"] * _cumulative(cols["nl_q"], t)
    else:
        cols["nl_p_acc"] = np.zeros_like(t)
        cols["nl_q_acc"] = np.zeros_like(t)
    lhs = energy + cols["diss_p_acc"] + cols["diss_q_acc"]
    rhs = energy[0] + cols["nl_p_acc"] + cols["nl_q_acc"]
    cols["ledger_residual"] = lhs - rhs
    return DiagnosticsRecord(cols)


def energy_ledger(samples, params: ModelParams, ks: bool = False,
                  nonlinear: bool = True) -> np.ndarray:
    """Ledger residual ``LHS - RHS`` at every sample.

    ``samples`` is a sequence of states or of dicts from :func:`sample_state`.
    """
    samples = list(samples)
    if len(samples) < 3:
        raise ValueError("energy ledger needs at least 3 samples")
    if not isinstance(samples[0], dict):
        samples = [sample_state(s) for s in samples]
    return build_record(samples, params, ks=ks, nonlinear=nonlinear)["ledger_residual"]


def bounded_envelope(values: np.ndarray, t: np.ndarray, t_end: float, factor: float = 2.0) -> bool:
    """True when ``max(values)`` is within ``factor`` of the max over ``t <= t_end/10``."""
    early = values[t <= t_end / 10 + 1e-12]
    return bool(np.max(values) <= factor * np.max(early))
