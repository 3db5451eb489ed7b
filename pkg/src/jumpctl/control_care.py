"""State-feedback synthesis with one-step-delayed actuation-mode knowledge.

The control coupled Riccati map, for ``l`` the actuation mode at ``k - 1``::

    A_l = A* (sum_i P[l, i] X_i) A + C*C
    C_l = A* (sum_i P[l, i] nu_i X_i) B
    B_l = sum_i P[l, i] nu_i (B* X_i B + D*D)
    X_l(X) = A_l - C_l B_l^{-1} C_l*

and the gain applied as ``u_k = F_{theta_{k-1}} x_k`` is
``F_l = -B_l^{-1} C_l*``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NonStabilizing, NotConverged, SingularBtilde
from .msops import control_delay_operator, spectral_radius

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


@dataclass
class ControlCareSolution:
    X: np.ndarray
    F: np.ndarray
    cost: float
    residual: float
    rho_control: float
    iterations: int
    stabilizing: bool = field(init=False)

    def __post_init__(self):
        self.stabilizing = bool(self.rho_control < 1.0)


def _weighted(ch_act, X):
    P, v = ch_act.tpm, ch_act.delivery_prob
    EX = np.einsum("li,ijk->ljk", P, X)
    EvX = np.einsum("li,ijk->ljk", P * v[None, :], X)
    mass = P @ v
    return EX, EvX, mass


def _all_ops(model, ch_act, X):
    A, B = model.A, model.B
    EX, EvX, mass = _weighted(ch_act, X)
    At = A.T
    calA = At @ EX @ A + model.Qc
    calC = At @ EvX @ B
    calB = B.T @ EvX @ B + mass[:, None, None] * model.Rc
    return calA, calC, calB, mass


def _check_btilde(calB, mass):
    for l, (Bl, w) in enumerate(zip(calB, mass)):
        if w <= 0.0 or np.linalg.cond(Bl) > COND_LIMIT:
            raise SingularBtilde(l)


def care_ops_control(model, ch_act, X, l: int):
    """The four matrices of the Riccati map at mode ``l``."""
    X = np.asarray(X, dtype=float)
    calA, calC, calB, mass = _all_ops(model, ch_act, X)
    if mass[l] <= 0.0 or np.linalg.cond(calB[l]) > COND_LIMIT:
        raise SingularBtilde(l)
    calX = calA[l] - calC[l] @ np.linalg.solve(calB[l], calC[l].T)
    return calA[l], calC[l], calB[l], calX


def riccati_map(model, ch_act, X):
    calA, calC, calB, mass = _all_ops(model, ch_act, X)
    _check_btilde(calB, mass)
    Xn = calA - calC @ np.linalg.solve(calB, np.swapaxes(calC, -1, -2))
    return 0.5 * (Xn + np.swapaxes(Xn, -1, -2))


def control_gain(model, ch_act, X, l: int) -> np.ndarray:
    _, calC, calB, _ = care_ops_control(model, ch_act, X, l)
    return -np.linalg.solve(calB, calC.T)


def control_gains(model, ch_act, X) -> np.ndarray:
    calA, calC, calB, mass = _all_ops(model, ch_act, np.asarray(X, dtype=float))
    _check_btilde(calB, mass)
    return -np.linalg.solve(calB, np.swapaxes(calC, -1, -2))


def optimal_control_cost(ch_act, model, X) -> float:
    pi = ch_act.stationary_or_compute()
    G = model.G
    per_mode = np.einsum("ji,mjk,kl->mil", G, X, G)
    return float(model.noise_scale * np.sum(pi * np.trace(per_mode, axis1=1, axis2=2)))


def solve_control_care(model, ch_act, tol=1e-10, max_iter=100_000,
                       require_stabilizing=False) -> ControlCareSolution:
    """Value iteration on the Riccati map from ``X = C*C`` in every mode.

    The converged gains are certified with the delayed-mode second-moment
    operator; a non-stabilizing fixed point is returned with
    ``stabilizing = False`` (or raised when ``require_stabilizing``).
    """
    N = ch_act.n_modes
    X = np.broadcast_to(model.Qc, (N, model.n_x, model.n_x)).copy()
    residual = np.inf
    for it in range(1, max_iter + 1):
        Xn = riccati_map(model, ch_act, X)
        residual = float(np.max(np.abs(Xn - X)))
        X = Xn
        if not np.all(np.isfinite(X)):
            raise NotConverged(it, residual)
        if residual <= tol * max(1.0, float(np.max(np.abs(X)))):
            break
    else:
        raise NotConverged(max_iter, residual)
    residual = float(np.max(np.abs(riccati_map(model, ch_act, X) - X)))
    F = control_gains(model, ch_act, X)
    rho = spectral_radius(control_delay_operator(ch_act, model, F))
    sol = ControlCareSolution(X, F, optimal_control_cost(ch_act, model, X), residual, rho, it)
    if not sol.stabilizing:
        log.warning("control CARE fixed point is not stabilizing (rho=%.4g)", rho)
        if require_stabilizing:
            raise NonStabilizing(rho)
    return sol
