import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from chemolab import hopf_cole
from chemolab.dynamics import KSState, ModelParams, State
from chemolab.errors import ConfigError, ConsistencyError, PositivityError, StructureError
from chemolab.grid import make_grid
from chemolab.initdata import gen_init
from chemolab.integrator import StepSchedule, simulate

from conftest import band_limited


def test_forward_constant_c_gives_zero_q(grid2d):
    u = 1.0 + band_limited(grid2d, np.random.default_rng(0))
    st_ = hopf_cole.forward(KSState(grid2d, u, np.ones(grid2d.sizes), ModelParams(p_infinity=1.5)))
    assert not np.any(st_.q)
    np.testing.assert_allclose(st_.p_tilde, u - 1.5, rtol=0, atol=0)


def test_forward_1d_exp_minus_sin():
    x = sp.symbols("x")
    q_f = sp.lambdify(x, -sp.diff(sp.log(sp.exp(-sp.sin(x))), x), "numpy")
    g = make_grid(1, [64])
    (xs,) = g.coordinates()
    s = hopf_cole.forward(KSState(g, np.ones(g.sizes), np.exp(-np.sin(xs)), ModelParams()))
    np.testing.assert_allclose(s.q[0], q_f(xs), atol=1e-11)
    np.testing.assert_allclose(s.q[0], np.cos(xs), atol=1e-11)


def test_forward_of_exponential_is_minus_gradient(grid2d):
    x, y = sp.symbols("x y")
    gexpr = sp.sin(x) * sp.cos(2 * y) + sp.Rational(1, 2) * sp.cos(3 * x + y)
    gx = sp.lambdify((x, y), sp.diff(gexpr, x), "numpy")
    gy = sp.lambdify((x, y), sp.diff(gexpr, y), "numpy")
    gf = sp.lambdify((x, y), gexpr, "numpy")
    X, Y = grid2d.coordinates()
    s = hopf_cole.forward(KSState(grid2d, np.ones(grid2d.sizes), np.exp(gf(X, Y)), ModelParams()))
    np.testing.assert_allclose(s.q[0], -gx(X, Y), atol=1e-11)
    np.testing.assert_allclose(s.q[1], -gy(X, Y), atol=1e-11)
    curl = grid2d.curl(grid2d.forward(s.q))
    assert np.sqrt(grid2d.integral_sq(curl)) <= 1e-13


def test_forward_rejects_nonpositive_c(grid1d):
    c = np.ones(grid1d.sizes)
    c[3] = 0.0
    with pytest.raises(PositivityError):
        hopf_cole.forward(KSState(grid1d, np.ones(grid1d.sizes), c, ModelParams()))


def test_inverse_zero_q_gives_unit_c(grid2d):
    ks = hopf_cole.inverse(State.zeros(grid2d, ModelParams()), 0.0)
    np.testing.assert_array_equal(ks.c, 1.0)
    np.testing.assert_array_equal(ks.u, 1.0)


def test_inverse_normalization_sets_mean_log_c(grid2d):
    s = gen_init(3, 0.2, 5, grid2d)
    ks = hopf_cole.inverse(s, normalization=0.7)
    assert np.mean(np.log(ks.c)) == pytest.approx(0.7, abs=1e-13)
    with pytest.raises(ConfigError):
        hopf_cole.inverse(s, normalization=np.inf)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), dim=st.sampled_from([1, 2, 3]), amp=st.floats(0.01, 2.0))
def test_round_trip_state_to_ks_to_state(seed, dim, amp):
    g = make_grid(dim, [16] * dim)
    s = gen_init(seed, amp, 3, g)
    back = hopf_cole.forward(hopf_cole.inverse(s, 0.0))
    np.testing.assert_allclose(back.q, s.q, atol=1e-11)
    np.testing.assert_allclose(back.p_tilde, s.p_tilde, atol=1e-11)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), shift=st.floats(-3, 3))
def test_round_trip_ks_to_state_to_ks(seed, shift):
    g = make_grid(2, [16, 16])
    rng = np.random.default_rng(seed)
    lnc = band_limited(g, rng, band=4)
    lnc = lnc - lnc.mean() + shift
    ks = KSState(g, 1 + 0.1 * band_limited(g, rng), np.exp(lnc), ModelParams())
    back = hopf_cole.inverse(hopf_cole.forward(ks), normalization=shift)
    np.testing.assert_allclose(back.c, ks.c, rtol=1e-11)
    np.testing.assert_allclose(back.u, ks.u, atol=1e-12)


def test_inverse_rejects_rotational_q():
    g = make_grid(2, [32, 32])
    X, Y = g.coordinates()
    s = State(g, np.zeros(g.sizes), np.stack([-np.sin(Y), np.sin(X)]), ModelParams())
    with pytest.raises(StructureError):
        hopf_cole.inverse(s)


def test_inverse_rejects_mean_flow(grid1d):
    # constant q is curl-free but no periodic potential has it as gradient
    s = State(grid1d, np.zeros(grid1d.sizes), np.full(grid1d.sizes, 0.3), ModelParams())
    with pytest.raises(ConsistencyError):
        hopf_cole.inverse(s)


def test_scaling_identity_for_unit_coefficients():
    prm = ModelParams(D=0.8, epsilon=0.03)
    scaled, sc, _ = hopf_cole.apply_scaling(prm)
    assert scaled == prm
    assert (sc.time, sc.space, sc.q_amp) == (1.0, 1.0, 1.0)


def test_scaling_example():
    prm = ModelParams(D=1.0, epsilon=0.5, chi=2.0, alpha=1.0)
    scaled, sc, _ = hopf_cole.apply_scaling(prm)
    assert scaled.D == 0.5 and scaled.epsilon == 0.25
    assert sc.space == pytest.approx(1 / np.sqrt(2), rel=1e-15)
    assert sc.q_amp == pytest.approx(np.sqrt(2), rel=1e-15)
    assert sc.time == 1.0


@settings(max_examples=50, deadline=None)
@given(D=st.floats(0.01, 10), eps=st.floats(0, 5, allow_subnormal=False),
       chi=st.floats(0.1, 10), alpha=st.floats(0.1, 10))
def test_scaling_round_trip_to_machine_precision(D, eps, chi, alpha):
    prm = ModelParams(D=D, epsilon=eps, chi=chi, alpha=alpha)
    scaled, _, _ = hopf_cole.apply_scaling(prm)
    back, _ = hopf_cole.invert_scaling(scaled, chi, alpha)
    assert (back.chi, back.alpha, back.p_infinity) == (chi, alpha, prm.p_infinity)
    # one division and one multiplication: at most one rounding each
    assert abs(back.D - D) <= 2 * np.spacing(D)
    assert abs(back.epsilon - eps) <= 2 * np.spacing(eps)


@pytest.mark.parametrize("chi", [0.25, 0.5, 2.0, 4.0])
def test_scaling_round_trip_bit_exact_for_binary_chi(chi):
    prm = ModelParams(D=0.7, epsilon=0.013, chi=chi, alpha=0.3)
    scaled, _, _ = hopf_cole.apply_scaling(prm)
    assert hopf_cole.invert_scaling(scaled, chi, 0.3)[0] == prm


def test_scaling_round_trip_of_fields():
    g = make_grid(2, [16, 16])
    prm = ModelParams(D=1.0, epsilon=0.1, chi=2.0, alpha=0.5)
    s = gen_init(1, 0.1, 4, g, prm)
    s.time = 0.3
    _, sc, scaled = hopf_cole.apply_scaling(prm, s)
    assert scaled.grid.extents[0] == pytest.approx(2 * np.pi * sc.space)
    _, back = hopf_cole.invert_scaling(scaled.params, 2.0, 0.5, scaled)
    np.testing.assert_allclose(back.q, s.q, rtol=1e-15)
    assert back.time == pytest.approx(0.3, rel=1e-15)
    np.testing.assert_allclose(back.grid.extents, g.extents, rtol=1e-15)


@pytest.mark.parametrize("chi,alpha", [(1.0, 1.0), (2.0, 0.5), (0.5, 2.0)])
def test_scaled_ks_trajectory_matches_normalized_conservation(chi, alpha):
    g = make_grid(1, [128])
    (x,) = g.coordinates()
    prm = ModelParams(D=1.0, epsilon=2e-2, chi=chi, alpha=alpha)
    u0 = 1 + 0.05 * np.cos(x) + 0.03 * np.sin(2 * x)
    c0 = np.exp(0.2 * np.sin(x) + 0.1 * np.cos(3 * x))
    t_end = 0.4
    dt = 1e-3
    ks_final, _ = simulate(KSState(g, u0, c0, prm), StepSchedule(dt, t_end), record=False)

    scaled_prm, sc, s0 = hopf_cole.apply_scaling(prm, hopf_cole.forward(KSState(g, u0, c0, prm)))
    s_final, _ = simulate(s0, StepSchedule(dt * sc.time, t_end * sc.time), record=False)

    expect = hopf_cole.forward(ks_final)
    assert np.max(np.abs(s_final.q / sc.q_amp - expect.q)) <= 1e-6
    assert np.max(np.abs(s_final.p_tilde - expect.p_tilde)) <= 1e-6
