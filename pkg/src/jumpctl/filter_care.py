"""Optimal mode-dependent observer gains for the sensing channel.

With ``D_n(Y) = sum_m Q[m, n] Y_m``, stationary sensing probabilities ``pi``,
delivery probabilities ``g`` and noise scale ``alpha``::

    At_n(Y) = A D_n(Y) A* + pi_n alpha GG*
    Ct_n(Y) = g_n^(1/2) A D_n(Y) L*
    Rt_n(Y) = pi_n alpha HH* + L D_n(Y) L*
    Y_n(Y)  = At_n - Ct_n Rt_n^{-1} Ct_n*
    M_n(Y)  = -A D_n(Y) L* Rt_n(Y)^{-1}

The maximal fixed point is reached by gain iteration: starting from any gain
with a stable error operator, solve the linear (Stein-type) equation for the
error covariance, replace the gain by ``M(Y)`` and repeat.  Each iterate is
no larger than the previous one and every gain along the way keeps the error
operator stable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import place_poles

from .errors import (HypothesisNotSatisfied, NoInitialGain, NotConverged,
                     SingularRtilde)
from .msops import (filter_matrices, hermitian_part, matrix_rep_V, noise_injection,
                    op_D_all, op_V, phi_hat, phi_hat_inv, spectral_radius)

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
EXACT_SOLVE_LIMIT = 4096
LMI_TOL = 1e-9


@dataclass
class FilterCareSolution:
    Y: np.ndarray
    M: np.ndarray
    cost: float
    residual: float
    rho_filter: float
    iterations: int
    trace_history: list = field(default_factory=list)
    min_step_eig: float = 0.0

    @property
    def stabilizing(self):
        return bool(self.rho_filter < 1.0)


@dataclass
class LmiReport:
    feasible: bool
    objective: float
    block_min_eig: list
    rtilde_min_eig: list
    schur_psd: bool
    schur_min_eig: float
    residual: float
    discrepancy: bool

    def to_dict(self):
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


def _pieces(model, ch, Y):
    Y = np.asarray(Y, dtype=float)
    pi = ch.stationary_or_compute()
    a = model.noise_scale
    A, L = model.A, model.L
    Dn = op_D_all(ch.tpm, Y)
    ADL = A @ Dn @ L.T
    At = A @ Dn @ A.T + pi[:, None, None] * a * model.GG
    Ct = np.sqrt(ch.delivery_prob)[:, None, None] * ADL
    Rt = pi[:, None, None] * a * model.HH + L @ Dn @ L.T
    return At, Ct, Rt, ADL


def _check_rtilde(Rt):
    for n, R in enumerate(Rt):
        if np.linalg.cond(R) > COND_LIMIT:
            raise SingularRtilde(n)


def care_ops_filter(model, ch, Y, n: int):
    At, Ct, Rt, _ = _pieces(model, ch, Y)
    if np.linalg.cond(Rt[n]) > COND_LIMIT:
        raise SingularRtilde(n)
    calY = At[n] - Ct[n] @ np.linalg.solve(Rt[n], Ct[n].T)
    return At[n], Ct[n], Rt[n], calY


def filter_riccati_map(model, ch, Y) -> np.ndarray:
    At, Ct, Rt, _ = _pieces(model, ch, Y)
    _check_rtilde(Rt)
    return hermitian_part(At - Ct @ np.linalg.solve(Rt, np.swapaxes(Ct, -1, -2)))


def filtering_gains(model, ch, Y) -> np.ndarray:
    _, _, Rt, ADL = _pieces(model, ch, Y)
    _check_rtilde(Rt)
    # M_n = -ADL_n Rt_n^{-1}; Rt symmetric so solve the transposed system
    return -np.swapaxes(np.linalg.solve(Rt, np.swapaxes(ADL, -1, -2)), -1, -2)


def filtering_gain(model, ch, Y, n: int) -> np.ndarray:
    _, _, Rt, ADL = _pieces(model, ch, Y)
    if np.linalg.cond(Rt[n]) > COND_LIMIT:
        raise SingularRtilde(n)
    return -np.linalg.solve(Rt[n], ADL[n].T).T


def solve_stein(model, ch, M, weights=None) -> np.ndarray:
    """Solve ``Y = V(Y) + O(M)`` for the error operator of gains ``M``.

    ``weights`` scales the per-mode noise injection (stationary probabilities
    by default).
    """
    if weights is None:
        weights = ch.stationary_or_compute()
    I, nx = ch.n_modes, model.n_x
    O = noise_injection(ch, model, M, weights)
    G1, G0 = filter_matrices(model, M)
    if I * nx * nx <= EXACT_SOLVE_LIMIT:
        lam = matrix_rep_V(ch, G1, G0).rep
        v = np.linalg.solve(np.eye(lam.shape[0]) - lam, phi_hat(O))
        return hermitian_part(phi_hat_inv(v, I, nx))
    Y = O.copy()
    for _ in range(1_000_000):
        Yn = op_V(ch, G1, G0, Y) + O
        if np.max(np.abs(Yn - Y)) <= 1e-12 * max(1.0, np.max(np.abs(Yn))):
            return hermitian_part(Yn)
        Y = Yn
    raise NotConverged(1_000_000, float(np.max(np.abs(Yn - Y))))


def optimal_filter_cost(ch, Y) -> float:
    """Long-run average of ``tr E[e e*]``.

    The blocks of ``Y`` already carry the stationary mode weights, so the
    average error second moment is the plain sum of their traces.
    """
    return float(np.trace(np.asarray(Y), axis1=1, axis2=2).sum())


def _observable(A, L):
    n = A.shape[0]
    obs = np.vstack([L @ np.linalg.matrix_power(A, k) for k in range(n)])
    return np.linalg.matrix_rank(obs) == n


def _pole_placement_gain(model):
    A, L = model.A, model.L
    n = A.shape[0]
    if not _observable(A, L):
        return None
    poles = 0.5 * np.linspace(1.0, 0.6, n) if n > 1 else np.array([0.5])
    try:
        K = place_poles(A.T, L.T, poles).gain_matrix
    except (ValueError, np.linalg.LinAlgError):
        return None
    return -K.T


def find_initial_detectable_gain(model, ch, seed=0, tries=100) -> np.ndarray:
    """A gain whose error operator has spectral radius below one.

    Tries zero gains, then a mode-independent pole-placement gain, then
    seeded random perturbations of the latter.
    """
    I = ch.n_modes
    shape = (I, model.n_x, model.n_y)
    zero = np.zeros(shape)
    if spectral_radius(matrix_rep_V(ch, *filter_matrices(model, zero))) < 1.0:
        return zero
    placed = _pole_placement_gain(model)
    base = zero
    if placed is not None:
        base = np.broadcast_to(placed, shape).copy()
        if spectral_radius(matrix_rep_V(ch, *filter_matrices(model, base))) < 1.0:
            return base
    rng = np.random.Generator(np.random.PCG64(seed))
    scale = max(1.0, float(np.max(np.abs(base))))
    for _ in range(tries):
        cand = base + scale * 10 ** rng.uniform(-2, 0.5) * rng.standard_normal(shape)
        if spectral_radius(matrix_rep_V(ch, *filter_matrices(model, cand))) < 1.0:
            return cand
    raise NoInitialGain("no mean-square detecting gain found for the sensing channel")


def solve_filter_care(model, ch, tol=1e-10, max_iter=1000, M0=None,
                      seed=0) -> FilterCareSolution:
    """Maximal solution of the filtering Riccati equation by gain iteration."""
    M = find_initial_detectable_gain(model, ch, seed=seed) if M0 is None else np.asarray(M0, float)
    Y_prev = None
    history = []
    min_step = np.inf
    for it in range(max_iter + 1):
        Y = solve_stein(model, ch, M)
        history.append(float(np.trace(Y, axis1=1, axis2=2).sum()))
        if Y_prev is not None:
            step = Y_prev - Y
            min_step = min(min_step, float(min(np.linalg.eigvalsh(step).min(), 0.0)))
            if np.max(np.abs(step)) <= tol * max(1.0, float(np.max(np.abs(Y)))):
                break
        Y_prev = Y
        M = filtering_gains(model, ch, Y)
    else:
        raise NotConverged(max_iter, float(np.max(np.abs(Y_prev - Y))))
    M = filtering_gains(model, ch, Y)
    residual = float(np.max(np.abs(filter_riccati_map(model, ch, Y) - Y)))
    rho = spectral_radius(matrix_rep_V(ch, *filter_matrices(model, M)))
    if rho >= 1.0:
        log.warning("filtering CARE solution is not stabilizing (rho=%.4g)", rho)
    return FilterCareSolution(Y, M, optimal_filter_cost(ch, Y), residual, rho, it,
                              history, 0.0 if min_step == np.inf else min_step)


def verify_lmi_feasibility(model, ch, Y, tol=LMI_TOL) -> LmiReport:
    """Check ``Y`` against the trace-maximization LMI and its Schur form."""
    Y = hermitian_part(np.asarray(Y, dtype=float))
    At, Ct, Rt, _ = _pieces(model, ch, Y)
    scale = max(1.0, float(np.max(np.abs(Y))))
    block_eigs, r_eigs = [], []
    for n in range(ch.n_modes):
        blk = np.block([[-Y[n] + At[n], Ct[n]], [Ct[n].T, Rt[n]]])
        block_eigs.append(float(np.linalg.eigvalsh(hermitian_part(blk)).min()))
        r_eigs.append(float(np.linalg.eigvalsh(hermitian_part(Rt[n])).min()))
    r_ok = all(e > tol * scale for e in r_eigs)
    lmi_ok = r_ok and all(e >= -tol * scale for e in block_eigs)
    if r_ok:
        gap = filter_riccati_map(model, ch, Y) - Y
        schur_min = float(min(np.linalg.eigvalsh(g).min() for g in gap))
        residual = float(np.max(np.abs(gap)))
    else:
        schur_min, residual = -np.inf, np.inf
    schur_ok = r_ok and schur_min >= -tol * scale
    return LmiReport(
        feasible=bool(lmi_ok),
        objective=float(np.trace(Y, axis1=1, axis2=2).sum()),
        block_min_eig=block_eigs,
        rtilde_min_eig=r_eigs,
        schur_psd=bool(schur_ok),
        schur_min_eig=schur_min,
        residual=residual,
        discrepancy=bool(lmi_ok != schur_ok),
    )


def _stein_lhs(model, ch, gains, Z):
    """Z_n - g_n (A + K_n L) D_n(Z) (A + K_n L)* - (1 - g_n) A D_n(Z) A*."""
    return Z - op_V(ch, *filter_matrices(model, gains), Z)


def _weighted_square(ch, K, R):
    g = ch.delivery_prob[:, None, None]
    return g * (K @ R @ np.swapaxes(K, -1, -2))


def lemma1_residuals(model, ch, Y, Yhat, Mhat, Xhat=None, tol=1e-9) -> dict:
    """Residuals of the three comparison identities between two candidates.

    ``Yhat`` must solve the Stein equation for ``Mhat`` and, when given,
    ``Xhat`` the Stein equation for ``M(Yhat)``; otherwise
    :class:`HypothesisNotSatisfied` is raised.
    """
    pi = ch.stationary_or_compute()
    Y, Yhat, Mhat = (np.asarray(a, dtype=float) for a in (Y, Yhat, Mhat))
    scale = max(1.0, float(np.max(np.abs(Yhat))), float(np.max(np.abs(Y))))
    hyp = _stein_lhs(model, ch, Mhat, Yhat) - noise_injection(ch, model, Mhat, pi)
    if np.max(np.abs(hyp)) > tol * scale:
        raise HypothesisNotSatisfied(
            f"Yhat does not solve the Stein equation for Mhat (residual {np.max(np.abs(hyp)):.3e})")

    *_, Rt_Y, _ = _pieces(model, ch, Y)
    M_Y = filtering_gains(model, ch, Y)
    calY = filter_riccati_map(model, ch, Y)
    diff = Yhat - Y
    out = {}
    lhs1 = _stein_lhs(model, ch, Mhat, diff)
    rhs1 = calY - Y + _weighted_square(ch, Mhat - M_Y, Rt_Y)
    out["item1"] = float(np.max(np.abs(lhs1 - rhs1)))

    *_, Rt_hat, _ = _pieces(model, ch, Yhat)
    M_hat_opt = filtering_gains(model, ch, Yhat)
    lhs2 = _stein_lhs(model, ch, M_hat_opt, diff)
    rhs2 = (_weighted_square(ch, M_hat_opt - M_Y, Rt_Y)
            + _weighted_square(ch, Mhat - M_hat_opt, Rt_hat) + calY - Y)
    out["item2"] = float(np.max(np.abs(lhs2 - rhs2)))

    if Xhat is not None:
        Xhat = np.asarray(Xhat, dtype=float)
        hyp3 = _stein_lhs(model, ch, M_hat_opt, Xhat) - noise_injection(ch, model, M_hat_opt, pi)
        if np.max(np.abs(hyp3)) > tol * max(scale, float(np.max(np.abs(Xhat)))):
            raise HypothesisNotSatisfied("Xhat does not solve the Stein equation for M(Yhat)")
        lhs3 = _stein_lhs(model, ch, M_hat_opt, Yhat - Xhat)
        rhs3 = _weighted_square(ch, Mhat - M_hat_opt, Rt_hat)
        out["item3"] = float(np.max(np.abs(lhs3 - rhs3)))
    return out


def check_lemma1_identities(model, ch, Y, Yhat, Mhat, Xhat=None) -> float:
    return max(lemma1_residuals(model, ch, Y, Yhat, Mhat, Xhat).values())
