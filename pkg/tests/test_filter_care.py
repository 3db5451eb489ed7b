import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jumpctl.closedloop import simulate
from jumpctl.control_care import solve_control_care
from jumpctl.errors import HypothesisNotSatisfied, NoInitialGain, SolverError
from jumpctl.filter_care import (care_ops_filter, check_lemma1_identities,
                                 filter_riccati_map, filtering_gain, filtering_gains,
                                 find_initial_detectable_gain, lemma1_residuals,
                                 optimal_filter_cost, solve_filter_care, solve_stein,
                                 verify_lmi_feasibility)
from jumpctl.model import MjlsModel
from jumpctl.msops import filter_matrices, matrix_rep_V, spectral_radius

from oracles import (SCALAR_GAIN, SCALAR_X, filter_value_iteration, random_channel,
                     random_model, scalar_model, single_mode, two_mode)


def test_care_ops_scalar_arithmetic():
    a, c, r, y = care_ops_filter(scalar_model(), single_mode(), [[[1.0]]], 0)
    assert (a[0, 0], c[0, 0], r[0, 0], y[0, 0]) == pytest.approx((1.25, 0.5, 2.0, 1.125))


def test_uninformative_sensing():
    Y = np.array([[[0.7]], [[1.3]]])
    ch = two_mode((0.0, 0.6))
    a, c, _, y = care_ops_filter(scalar_model(), ch, Y, 0)
    assert c[0, 0] == 0.0 and y[0, 0] == pytest.approx(a[0, 0])
    m = MjlsModel(A=[[0.5]], B=[[1]], G=[[1, 0]], C=[[1], [0]], D=[[0], [1]],
                  L=[[0.0]], H=[[0, 1]])
    a, _, _, y = care_ops_filter(m, ch, Y, 1)
    assert y[0, 0] == pytest.approx(a[0, 0])


def test_scalar_dual_fixed_point():
    sol = solve_filter_care(scalar_model(), single_mode(), tol=1e-13)
    assert sol.Y[0, 0, 0] == pytest.approx(SCALAR_X, abs=1e-9)
    assert sol.M[0, 0, 0] == pytest.approx(SCALAR_GAIN, abs=1e-9)
    assert sol.rho_filter == pytest.approx((0.5 + SCALAR_GAIN) ** 2, abs=1e-9)
    assert sol.cost == pytest.approx(SCALAR_X, abs=1e-9)
    assert filtering_gain(scalar_model(), single_mode(), sol.Y, 0)[0, 0] == pytest.approx(
        SCALAR_GAIN, abs=1e-9)


def test_memoryless_plant():
    ch = two_mode()
    m = scalar_model(a=0.0, noise=0.4)
    sol = solve_filter_care(m, ch)
    pi = ch.stationary_or_compute()
    np.testing.assert_allclose(sol.Y[:, 0, 0], pi * 0.4, atol=1e-15)
    np.testing.assert_array_equal(sol.M, 0.0)
    assert sol.iterations == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31))
def test_matches_value_iteration_and_certificates(I, n, seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n)
    ch = random_channel(rng, I)
    try:
        sol = solve_filter_care(m, ch, tol=1e-12)
    except NoInitialGain:
        return
    Yv = filter_value_iteration(m.A, m.GG, m.L, m.HH, m.noise_scale, ch.tpm, ch.delivery_prob)
    scale = max(1.0, np.abs(Yv).max())
    np.testing.assert_allclose(sol.Y, Yv, atol=1e-8 * scale)
    assert sol.residual <= 1e-9 * scale
    assert sol.rho_filter < 1
    lmi = verify_lmi_feasibility(m, ch, sol.Y)
    assert lmi.feasible and lmi.schur_psd and not lmi.discrepancy
    assert min(lmi.rtilde_min_eig) > 0
    h = np.array(sol.trace_history)
    assert np.all(np.diff(h) <= 1e-10 * max(1.0, h[0]))
    assert sol.min_step_eig >= -1e-10 * scale


def test_lmi_probes():
    m, ch = scalar_model(), single_mode()
    Y = solve_filter_care(m, ch, tol=1e-13).Y
    rep = verify_lmi_feasibility(m, ch, Y)
    assert rep.feasible and rep.residual <= 1e-9
    lower = verify_lmi_feasibility(m, ch, Y - 0.05)
    assert lower.feasible and lower.objective < rep.objective
    upper = verify_lmi_feasibility(m, ch, Y + 1.0)
    assert not upper.feasible and not upper.schur_psd


def test_lmi_maximality_on_random_candidates():
    rng = np.random.default_rng(5)
    m, ch = random_model(rng, 2), random_channel(rng, 2)
    sol = solve_filter_care(m, ch)
    best = np.trace(sol.Y, axis1=1, axis2=2).sum()
    found = 0
    for _ in range(300):
        P = rng.standard_normal((2, 2, 2)) * 0.3
        cand = sol.Y - P @ np.swapaxes(P, 1, 2) + 0.02 * rng.standard_normal((2, 2, 2))
        cand = 0.5 * (cand + np.swapaxes(cand, 1, 2))
        rep = verify_lmi_feasibility(m, ch, cand)
        if rep.feasible:
            found += 1
            assert rep.objective <= best + 1e-8
    assert found > 0


def test_stein_solution_is_fixed_point():
    rng = np.random.default_rng(2)
    m, ch = random_model(rng, 3), random_channel(rng, 3)
    M = find_initial_detectable_gain(m, ch)
    Y = solve_stein(m, ch, M)
    from jumpctl.msops import noise_injection, op_V
    O = noise_injection(ch, m, M, ch.stationary_or_compute())
    np.testing.assert_allclose(Y, op_V(ch, *filter_matrices(m, M), Y) + O, atol=1e-12)


def test_initial_gain_candidates():
    stable = scalar_model(a=0.5)
    np.testing.assert_array_equal(find_initial_detectable_gain(stable, two_mode()), 0.0)
    m = scalar_model(a=1.2)
    M = find_initial_detectable_gain(m, single_mode(1.0))
    assert M[0, 0, 0] == pytest.approx(-0.7)
    assert spectral_radius(matrix_rep_V(single_mode(1.0), *filter_matrices(m, M))) == \
        pytest.approx(0.25)
    with pytest.raises(NoInitialGain):
        find_initial_detectable_gain(scalar_model(a=2.0), single_mode(0.1))


def _lemma_instance(seed):
    rng = np.random.default_rng(seed)
    I, n = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    m, ch = random_model(rng, n), random_channel(rng, I)
    M0 = find_initial_detectable_gain(m, ch)
    Y = solve_stein(m, ch, M0 + 0.05 * rng.standard_normal(M0.shape))
    Mhat = M0 + 0.05 * rng.standard_normal(M0.shape)
    Yhat = solve_stein(m, ch, Mhat)
    Xhat = solve_stein(m, ch, filtering_gains(m, ch, Yhat))
    return m, ch, Y, Yhat, Mhat, Xhat


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_lemma1_identities_random(seed):
    try:
        m, ch, Y, Yhat, Mhat, Xhat = _lemma_instance(seed)
    except (NoInitialGain, SolverError):
        return
    scale = max(1.0, np.abs(Y).max(), np.abs(Yhat).max(), np.abs(Xhat).max())
    res = lemma1_residuals(m, ch, Y, Yhat, Mhat, Xhat)
    assert set(res) == {"item1", "item2", "item3"}
    assert max(res.values()) <= 1e-9 * scale


def test_lemma1_special_cases():
    m, ch = scalar_model(), two_mode()
    sol = solve_filter_care(m, ch, tol=1e-13)
    assert check_lemma1_identities(m, ch, sol.Y, sol.Y, sol.M, sol.Y) <= 1e-12
    # the right side of the first identity vanishes at a fixed point with its own gain
    lhs_zero = filter_riccati_map(m, ch, sol.Y) - sol.Y
    assert np.abs(lhs_zero).max() <= 1e-10
    with pytest.raises(HypothesisNotSatisfied):
        lemma1_residuals(m, ch, sol.Y, sol.Y + 1.0, sol.M)


def test_lemma1_scalar_tight():
    m, ch = scalar_model(a=0.9, noise=0.7), single_mode(0.8)
    Y = np.array([[[1.7]]])
    Mhat = np.array([[[-0.4]]])
    Yhat = solve_stein(m, ch, Mhat)
    Xhat = solve_stein(m, ch, filtering_gains(m, ch, Yhat))
    assert check_lemma1_identities(m, ch, Y, Yhat, Mhat, Xhat) <= 1e-12


def test_cost_is_long_run_error_energy():
    m = MjlsModel(A=[[1.1, 0.2], [0.0, 0.7]], B=[[1.0], [0.5]], G=[[1, 0, 0], [0, 1, 0]],
                  C=[[1, 0], [0, 1], [0, 0]], D=[[0], [0], [1]], L=[[1, 0]],
                  H=[[0, 0, 0.5]], noise_scale=0.3)
    ch = two_mode()
    f, c = solve_filter_care(m, ch), solve_control_care(m, ch)
    tr = simulate(m, ch, ch, c.F, f.M, [0, 0], [0, 0], 400, trials=4000, seed=1)
    e2 = (tr.e[:, 100:] ** 2).sum(axis=-1).mean()
    assert e2 == pytest.approx(optimal_filter_cost(ch, f.Y), rel=0.05)
    assert optimal_filter_cost(single_mode(), np.array([[[2.0, 0], [0, 3.0]]])) == 5.0
