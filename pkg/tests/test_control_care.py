import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jumpctl.channels import MarkovChannel
from jumpctl.control_care import (care_ops_control, control_gain, optimal_control_cost,
                                  riccati_map, solve_control_care)
from jumpctl.errors import NonStabilizing, NotConverged, SingularBtilde, SolverError
from jumpctl.model import MjlsModel
from jumpctl.pendulum import pendulum_channel, pendulum_model

from oracles import (SCALAR_GAIN, SCALAR_X, control_value_iteration, random_channel,
                     random_model, scalar_model, single_mode, two_mode)


def test_care_ops_scalar_arithmetic():
    a, c, b, x = care_ops_control(scalar_model(), single_mode(), [[[1.0]]], 0)
    assert (a[0, 0], c[0, 0], b[0, 0], x[0, 0]) == pytest.approx((1.25, 0.5, 2.0, 1.125))


def test_never_delivered_raises():
    ch = MarkovChannel(np.array([[0.5, 0.5], [0.5, 0.5]]), np.zeros(2))
    with pytest.raises(SingularBtilde, match="control never delivered from mode 0"):
        care_ops_control(scalar_model(), ch, np.ones((2, 1, 1)), 0)
    with pytest.raises(SingularBtilde):
        solve_control_care(scalar_model(), ch)


def test_no_authority():
    m = MjlsModel(A=[[0.9]], B=[[0.0]], G=[[1.0, 0.0]], C=[[1.0], [0.0]], D=[[0.0], [1.0]],
                  L=[[1.0]], H=[[0.0, 1.0]])
    a, _, _, x = care_ops_control(m, single_mode(), [[[2.0]]], 0)
    assert x[0, 0] == pytest.approx(a[0, 0])
    assert control_gain(m, single_mode(), [[[2.0]]], 0)[0, 0] == 0.0


def test_scalar_closed_form():
    sol = solve_control_care(scalar_model(), single_mode(), tol=1e-13)
    assert sol.X[0, 0, 0] == pytest.approx(SCALAR_X, abs=1e-9)
    assert sol.F[0, 0, 0] == pytest.approx(SCALAR_GAIN, abs=1e-9)
    assert sol.stabilizing and sol.residual < 1e-12
    assert sol.rho_control == pytest.approx((0.5 + SCALAR_GAIN) ** 2, abs=1e-9)


def _bisection_dare(a, b, q, r):
    # positive root of x = a^2 x + q - (a b x)^2 / (b^2 x + r)
    f = lambda x: a * a * x + q - (a * b * x) ** 2 / (b * b * x + r) - x
    lo, hi = 0.0, 1.0
    while f(hi) > 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
    return 0.5 * (lo + hi)


@pytest.mark.parametrize("a, b", [(0.5, 1.0), (1.3, 0.7), (2.0, 2.0), (-0.8, 0.3)])
def test_single_mode_matches_scalar_dare(a, b):
    m = scalar_model(a=a, b=b)
    sol = solve_control_care(m, single_mode(), tol=1e-13)
    assert sol.X[0, 0, 0] == pytest.approx(_bisection_dare(a, b, 1.0, 1.0), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31))
def test_matches_independent_value_iteration(N, n, seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n)
    ch = random_channel(rng, N, low=0.6)
    try:
        sol = solve_control_care(m, ch, tol=1e-12)
    except SolverError:
        return
    if not sol.stabilizing:
        return
    X, F = control_value_iteration(m.A, m.B, m.Qc, m.Rc, ch.tpm, ch.delivery_prob)
    scale = max(1.0, np.abs(X).max())
    np.testing.assert_allclose(sol.X, X, atol=1e-8 * scale)
    np.testing.assert_allclose(sol.F, F, atol=1e-7 * max(1.0, np.abs(F).max()))
    # blocks PSD, residual small
    assert min(np.linalg.eigvalsh(x).min() for x in sol.X) >= -1e-10 * scale
    assert sol.residual <= 1e-9 * scale


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**31))
def test_gain_substitution_identity(N, n, seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, n)
    ch = random_channel(rng, N)
    X = rng.standard_normal((N, n, n))
    X = X @ np.swapaxes(X, 1, 2)
    Xmap = riccati_map(m, ch, X)
    for l in range(N):
        a, c, b, x = care_ops_control(m, ch, X, l)
        F = control_gain(m, ch, X, l)
        sub = a + c @ F + F.T @ c.T + F.T @ b @ F
        scale = max(1.0, np.abs(a).max())
        np.testing.assert_allclose(sub, x, atol=1e-10 * scale)
        np.testing.assert_allclose(Xmap[l], x, atol=1e-10 * scale)


def test_cost_special_cases():
    X = np.array([[[2.0, 0.3], [0.3, 1.0]]])
    m = MjlsModel(A=np.eye(2), B=np.ones((2, 1)), G=np.zeros((2, 2)),
                  C=np.vstack([np.eye(2), np.zeros((1, 2))]), D=[[0], [0], [1]],
                  L=np.eye(2), H=np.eye(2), noise_scale=0.5)
    assert optimal_control_cost(single_mode(), m, X) == 0.0
    G = np.array([[1.0, 0.0], [0.5, 2.0]])
    m2 = MjlsModel(A=m.A, B=m.B, G=np.hstack([G, np.zeros((2, 2))]), C=m.C, D=m.D, L=m.L,
                   H=np.hstack([np.zeros((2, 2)), np.eye(2)]), noise_scale=0.5)
    assert optimal_control_cost(single_mode(), m2, X) == pytest.approx(
        0.5 * np.trace(G.T @ X[0] @ G))


def test_cost_matches_state_feedback_monte_carlo():
    # long-run average of |z|^2 with u = F_{theta_prev} x and exact state
    m = scalar_model(a=1.1, noise=0.5)
    ch = two_mode((0.9, 0.5))
    sol = solve_control_care(m, ch)
    P, nu_p, F = ch.tpm, ch.delivery_prob, sol.F[:, 0, 0]
    rng = np.random.default_rng(11)
    trials, T, burn = 20_000, 600, 100
    prev = rng.choice(2, trials, p=ch.stationary_or_compute())
    cur = (rng.random(trials) < P[prev, 1]).astype(int)
    x = np.zeros(trials)
    acc = 0.0
    for k in range(T):
        nu = rng.random(trials) < nu_p[cur]
        u = F[prev] * x
        if k >= burn:
            acc += np.mean(x * x + nu * u * u)
        x = 1.1 * x + nu * u + np.sqrt(0.5) * rng.standard_normal(trials)
        prev, cur = cur, (rng.random(trials) < P[cur, 1]).astype(int)
    assert acc / (T - burn) == pytest.approx(sol.cost, rel=0.05)


def test_pendulum_control_is_stabilizing():
    sol = solve_control_care(pendulum_model(), pendulum_channel())
    assert sol.stabilizing and sol.rho_control < 1


def test_non_stabilizing_is_flagged():
    # unstable plant that the cost never sees: X = 0 is a fixed point, F = 0
    m = MjlsModel(A=[[1.5]], B=[[1.0]], G=[[1.0, 0.0]], C=[[0.0], [0.0]], D=[[0.0], [1.0]],
                  L=[[1.0]], H=[[0.0, 1.0]])
    sol = solve_control_care(m, single_mode())
    assert not sol.stabilizing
    assert sol.rho_control == pytest.approx(2.25)
    with pytest.raises(NonStabilizing):
        solve_control_care(m, single_mode(), require_stabilizing=True)


def test_divergence_is_reported():
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NotConverged):
            solve_control_care(scalar_model(a=3.0), single_mode(0.05), max_iter=5000)
