import numpy as np
import pytest
from scipy.linalg import expm

from chemolab.diagnostics import curl_mass_monitor
from chemolab.dynamics import KSState, ModelParams, State, linear_block
from chemolab.errors import BlowupError, CFLError, ConfigError
from chemolab.grid import make_grid
from chemolab.initdata import gen_init
from chemolab.integrator import (
    StepSchedule,
    block_expm,
    build_propagators,
    cfl_advisory,
    simulate,
    step,
)
from chemolab.sweep import temporal_convergence


@pytest.mark.parametrize(
    "D,eps,pinf,k,dt",
    [
        (1.0, 0.0, 1.0, 1.0, 0.1),
        (1.0, 0.01, 1.0, 3.0, 0.1),
        (0.5, 0.3, 2.0, 7.0, 0.01),
        (1.0, 1.0, 1.0, 1.0, 1.0),
        (1.0, 0.0, 1.0, 2.0, 0.1),  # coincident eigenvalues: (D-eps)|k| = 2
        (1.0, 0.5, 1.0, 4.0, 0.1),  # coincident again
        (1.0, 0.0, 1.0, 2.0 + 1e-9, 0.1),
        (1.0, 0.0, 1.0, 40.0, 0.5),
    ],
)
def test_block_exponential_matches_dense_expm(D, eps, pinf, k, dt):
    prm = ModelParams(D=D, epsilon=eps, p_infinity=pinf)
    block, _ = linear_block([k], prm)
    np.testing.assert_allclose(block_expm(k, prm, dt), expm(dt * block), rtol=1e-12, atol=1e-12)


def test_block_exponential_small_dt():
    prm = ModelParams(D=1.0, epsilon=0.2)
    block, _ = linear_block([3.0], prm)
    dt = 1e-6
    np.testing.assert_allclose(block_expm(3.0, prm, dt), np.eye(2) + dt * block, atol=1e-10)


def test_propagator_identity_at_zero_mode_and_semigroup(grid2d):
    prop = build_propagators(grid2d, ModelParams(epsilon=0.1), 0.05)
    np.testing.assert_array_equal(prop.full[(slice(None), slice(None), 0, 0)], np.eye(2))
    half2 = np.einsum("ij...,jk...->ik...", prop.half, prop.half)
    np.testing.assert_allclose(half2, prop.full, atol=1e-12)


def test_step_keeps_zero_state(grid2d, params):
    s = State.zeros(grid2d, params)
    out = step(s, build_propagators(grid2d, params, 0.01))
    assert not np.any(out.p_tilde) and not np.any(out.q)
    assert out.time == pytest.approx(0.01)


def test_step_rejects_wrong_dt(grid1d, params):
    prop = build_propagators(grid1d, params, 0.01)
    with pytest.raises(ConfigError):
        step(State.zeros(grid1d, params), prop, 0.02)


@pytest.mark.parametrize("eps", [0.0, 0.05])
def test_linearized_single_mode_matches_matrix_exponential(eps):
    g = make_grid(1, [32])
    (x,) = g.coordinates()
    prm = ModelParams(D=1.0, epsilon=eps)
    dt = 0.05
    s = State(g, 0.3 * np.cos(x), 0.2 * np.sin(x), prm)
    prop = build_propagators(g, prm, dt)
    block, _ = linear_block([1.0], prm)
    E = expm(dt * block)
    # complex amplitudes of the k = +1 mode: p_hat, and longitudinal = q_hat (k_hat = +1)
    v = np.array([g.forward(s.p_tilde)[1], g.forward(s.q[0])[1]])
    for _ in range(20):
        s = step(s, prop, nonlinear=False)
        v = E @ v
        got = np.array([g.forward(s.p_tilde)[1], g.forward(s.q[0])[1]])
        assert np.max(np.abs(got - v)) <= 1e-12 * np.max(np.abs(v)) * g.npoints


def test_ks_uniform_state_matches_ode():
    g = make_grid(1, [16])
    prm = ModelParams(D=1.0, epsilon=0.1, alpha=1.0)
    s0 = KSState(g, np.ones(g.sizes), np.full(g.sizes, 2.0), prm)
    fin, _ = simulate(s0, StepSchedule(0.01, 1.0, 10), record=False)
    np.testing.assert_allclose(fin.c, 2.0 * np.exp(-1.0), rtol=1e-10)
    np.testing.assert_allclose(fin.u, 1.0, atol=1e-14)


def test_ks_uniform_state_general_rate():
    g = make_grid(2, [8, 8])
    prm = ModelParams(D=1.0, epsilon=0.1, alpha=0.3, chi=2.0)
    s0 = KSState(g, np.full(g.sizes, 1.5), np.full(g.sizes, 0.7), prm)
    fin, _ = simulate(s0, StepSchedule(0.02, 0.6, 5), record=False)
    np.testing.assert_allclose(fin.c, 0.7 * np.exp(-0.3 * 1.5 * 0.6), rtol=1e-10)


def test_ks_heat_flow_single_mode_decay():
    g = make_grid(1, [32])
    (x,) = g.coordinates()
    prm = ModelParams(D=0.7, epsilon=0.1, chi=0.0, alpha=0.0)
    s0 = KSState(g, 1 + 0.1 * np.cos(2 * x), np.full(g.sizes, 3.0), prm)
    fin, _ = simulate(s0, StepSchedule(0.05, 0.5), record=False)
    np.testing.assert_allclose(fin.u, 1 + 0.1 * np.exp(-0.7 * 4 * 0.5) * np.cos(2 * x), atol=1e-13)


def test_zero_perturbation_run_stays_zero(grid2d, params):
    fin, rec = simulate(State.zeros(grid2d, params), StepSchedule(0.01, 0.1))
    assert not np.any(fin.p_tilde) and not np.any(fin.q)
    for col in ("l2_p", "l2_q", "h3_p", "linf_q", "ledger_residual"):
        assert not np.any(rec[col])


def test_small_amplitude_energy_non_increasing():
    g = make_grid(2, [32, 32])
    s0 = gen_init(2, 0.05, 4, g, ModelParams(epsilon=0.05))
    dt = 0.005
    _, rec = simulate(s0, StepSchedule(dt, 1.0))
    E = rec["l2_p"] ** 2 + rec["l2_q"] ** 2
    assert np.max(np.diff(E)) <= 1e-8 * dt


def test_temporal_order_nonlinear_1d():
    g = make_grid(1, [64])
    s0 = gen_init(1, 0.3, 4, g, ModelParams(epsilon=0.1))
    errs, orders = temporal_convergence(s0, 1.0, [0.04, 0.02, 0.01, 0.005])
    assert min(orders[-2:]) >= 3.7, orders


def test_curl_and_mass_preserved_2d():
    g = make_grid(2, [32, 32])
    s0 = gen_init(8, 0.2, 6, g, ModelParams(epsilon=0.02))
    curl0, mass0 = curl_mass_monitor(s0)
    fin, rec = simulate(s0, StepSchedule(0.01, 0.5))
    assert np.max(rec["l2_curlq"] / (1 + rec["l2_gradq"])) <= 1e-10
    assert abs(rec["mass_p"][-1] - rec["mass_p"][0]) <= 1e-12 * (1 + abs(mass0))


def test_eps_zero_path_is_limit_of_small_eps():
    g = make_grid(1, [32])
    s0 = gen_init(0, 0.2, 4, g, ModelParams(epsilon=0.0))
    sched = StepSchedule(0.01, 0.5)
    a, _ = simulate(s0, sched, record=False)
    s1 = s0.copy()
    s1.params = s0.params.with_epsilon(1e-14)
    b, _ = simulate(s1, sched, record=False)
    np.testing.assert_allclose(a.q, b.q, atol=1e-12)
    np.testing.assert_allclose(a.p_tilde, b.p_tilde, atol=1e-12)


def test_cfl_advisory_zero_and_linear_in_dt(grid1d, params):
    assert cfl_advisory(State.zeros(grid1d, params), 0.1) == 0.0
    s = gen_init(0, 0.3, 4, grid1d, params)
    assert cfl_advisory(s, 0.02) == pytest.approx(2 * cfl_advisory(s, 0.01), rel=1e-15)


def test_cfl_flags_overlarge_dt():
    g = make_grid(1, [32])
    dx = g.spacing[0]
    (x,) = g.coordinates()
    q = np.cos(x)  # max|q| = 1
    s = State(g, np.zeros(g.sizes), q, ModelParams(epsilon=0.1))
    dt = 2 * dx
    assert cfl_advisory(s, dt) == pytest.approx(2.0)
    with pytest.raises(CFLError):
        simulate(s, StepSchedule(dt, 2 * dt, cfl_safety=1.0), record=False)


def test_blowup_error_is_structured():
    g = make_grid(1, [16])
    s = State(g, np.zeros(g.sizes), np.zeros(g.sizes), ModelParams(epsilon=0.1))
    s.p_tilde[0] = np.inf
    with pytest.raises(BlowupError) as exc:
        simulate(s, StepSchedule(0.01, 0.02), record=False)
    assert exc.value.time == 0.0


@pytest.mark.parametrize(
    "kwargs",
    [dict(dt=0.0, t_end=1.0), dict(dt=0.1, t_end=0.05), dict(dt=0.1, t_end=1.0, stride=0),
     dict(dt=0.1, t_end=1.0, cfl_safety=1.5), dict(dt=0.3, t_end=1.0)],
)
def test_schedule_validation(kwargs):
    with pytest.raises(ConfigError):
        StepSchedule(**kwargs)


def test_observers_called_every_stride(grid1d, params):
    seen = []
    simulate(State.zeros(grid1d, params), StepSchedule(0.01, 0.1, stride=3),
             observers=[lambda s: seen.append(round(s.time, 10))], record=False)
    assert seen == [0.0, 0.03, 0.06, 0.09, 0.1]
