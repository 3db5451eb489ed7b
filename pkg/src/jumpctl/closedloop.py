"""Observer-based output feedback over both lossy channels.

Per step ``k`` the controller holds the estimate ``xh_k`` and the actuation
mode of step ``k - 1`` (acknowledged), sends ``u_k = F_{theta_{k-1}} xh_k``,
and after the step learns whether the control and measurement packets got
through.  The estimation error ``e = x - xh`` obeys::

    e+ = (A + gamma M_eta L) e + (G + gamma M_eta H) w

which does not involve ``F``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .channels import transition_cdf
from .errors import DimensionMismatch, InsufficientTrials
from .msops import (OperatorMatrix, control_delay_operator, filter_matrices,
                    matrix_rep_V, spectral_radius)

AUGMENTED_LIMIT = 4096
BOOKKEEPING_TOL = 1e-12


@dataclass(frozen=True)
class ClosedLoopMatrices:
    """Realization-indexed closed-loop and controller matrices."""

    model: object
    F: np.ndarray
    M: np.ndarray

    def gamma(self, nu, theta_prev, delivered, eta):
        m = self.model
        nx = m.n_x
        BF = nu * (m.B @ self.F[theta_prev])
        out = np.zeros((2 * nx, 2 * nx))
        out[:nx, :nx] = m.A + BF
        out[:nx, nx:] = -BF
        out[nx:, nx:] = m.A + delivered * (self.M[eta] @ m.L)
        return out

    def sigma(self, delivered, eta):
        m = self.model
        return np.vstack([m.G, m.G + delivered * (self.M[eta] @ m.H)])

    def A_hat(self, nu, theta_prev, delivered, eta):
        m = self.model
        return m.A + nu * (m.B @ self.F[theta_prev]) + delivered * (self.M[eta] @ m.L)

    def B_hat(self, eta):
        return -self.M[eta]

    def C_hat(self, theta_prev):
        return self.F[theta_prev]


def build_closed_loop(model, F, M) -> ClosedLoopMatrices:
    F = np.asarray(F, dtype=float)
    M = np.asarray(M, dtype=float)
    if F.ndim != 3 or F.shape[1:] != (model.n_u, model.n_x):
        raise DimensionMismatch(f"F must be (N, {model.n_u}, {model.n_x}), got {F.shape}")
    if M.ndim != 3 or M.shape[1:] != (model.n_x, model.n_y):
        raise DimensionMismatch(f"M must be (I, {model.n_x}, {model.n_y}), got {M.shape}")
    return ClosedLoopMatrices(model, F, M)


def observer_step(model, M, xhat, y, nu, delivered, u, eta):
    """Next estimate from the current one and the (possibly empty) measurement."""
    xhat = np.asarray(xhat, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if xhat.shape != (model.n_x,) or y.shape != (model.n_y,) or u.shape != (model.n_u,):
        raise DimensionMismatch("observer inputs do not match the model")
    Mn = np.asarray(M)[eta]
    return model.A @ xhat + nu * (model.B @ u) - Mn @ (y - delivered * (model.L @ xhat))


@dataclass
class SimulationTrace:
    """Per-trial, per-step records; arrays are indexed ``[trial, k]``."""

    theta: np.ndarray
    theta_prev: np.ndarray
    eta: np.ndarray
    nu: np.ndarray
    gamma: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    e: np.ndarray
    u: np.ndarray
    y: np.ndarray
    z2: np.ndarray
    seed: int
    noise_on: bool
    summary: dict = field(default_factory=dict)

    @property
    def trials(self):
        return self.x.shape[0]

    @property
    def steps(self):
        return self.x.shape[1] - 1

    def header(self):
        nx, nu = self.x.shape[2], self.u.shape[2]
        cols = ["k", "trial", "theta", "eta", "nu", "gamma"]
        cols += [f"x{i + 1}" for i in range(nx)] + [f"xhat{i + 1}" for i in range(nx)]
        cols += [f"e{i + 1}" for i in range(nx)] + [f"u{i + 1}" for i in range(nu)]
        return cols + ["znorm2"]

    def write_csv(self, path):
        trials, T1, nx = self.x.shape
        k = np.tile(np.arange(T1), trials)
        r = np.repeat(np.arange(trials), T1)
        ints = np.column_stack([k, r, self.theta.ravel(), self.eta.ravel(),
                                self.nu.ravel(), self.gamma.ravel()])
        floats = np.column_stack([self.x.reshape(-1, nx), self.xhat.reshape(-1, nx),
                                  self.e.reshape(-1, nx),
                                  self.u.reshape(trials * T1, -1), self.z2.ravel()])
        with open(path, "w") as fh:
            fh.write(",".join(self.header()) + "\n")
            for irow, frow in zip(ints, floats):
                fh.write(",".join(map(str, irow.tolist())) + ","
                         + ",".join(f"{v:.17g}" for v in frow.tolist()) + "\n")


def _thread_count():
    cap = os.environ.get("JUMPCTL_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = max(1, min(n, int(cap)))
    return n


def _stream(seed, trial):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial])))


def _draw(trial_ids, seed, T1, n_w):
    n = len(trial_ids)
    u_init = np.empty((n, 2))
    u_th = np.empty((n, T1))
    u_et = np.empty((n, T1))
    u_nu = np.empty((n, T1))
    u_ga = np.empty((n, T1))
    w = np.empty((n, T1, n_w))
    for j, t in enumerate(trial_ids):
        rng = _stream(seed, int(t))
        u_init[j] = rng.random(2)
        u_th[j] = rng.random(T1)
        u_et[j] = rng.random(T1)
        u_nu[j] = rng.random(T1)
        u_ga[j] = rng.random(T1)
        w[j] = rng.standard_normal((T1, n_w))
    return u_init, u_th, u_et, u_nu, u_ga, w


def _initial_modes(u, dist, pinned):
    if pinned is not None:
        return np.full(u.shape[0], int(pinned), dtype=np.int64)
    cdf = np.cumsum(dist)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(dist) - 1).astype(np.int64)


def _simulate_chunk(model, ch_act, ch_sens, F, M, x0, xh0, T, trial_ids, seed,
                    noise_on, theta0, eta0):
    T1 = T + 1
    u_init, u_th, u_et, u_nu, u_ga, w = _draw(trial_ids, seed, T1, model.n_w)
    k = _backend.kernels
    th_path = k.chain_paths(transition_cdf(ch_act.tpm), u_th,
                            _initial_modes(u_init[:, 0], ch_act.stationary_or_compute(), theta0))
    et_path = k.chain_paths(transition_cdf(ch_sens.tpm), u_et,
                            _initial_modes(u_init[:, 1], ch_sens.stationary_or_compute(), eta0))
    theta_prev = np.ascontiguousarray(th_path[:, :-1])
    theta = np.ascontiguousarray(th_path[:, 1:])
    eta = np.ascontiguousarray(et_path[:, 1:])
    nu = (u_nu < ch_act.delivery_prob[theta]).astype(np.int8)
    gam = (u_ga < ch_sens.delivery_prob[eta]).astype(np.int8)
    w = w * np.sqrt(model.noise_scale) if noise_on else np.zeros_like(w)
    c = np.ascontiguousarray
    x, xh, e, u, y, z2 = k.closed_loop(
        c(model.A), c(model.B), c(model.G), c(model.C), c(model.D), c(model.L), c(model.H),
        c(F), c(M), theta_prev, eta, nu, gam, c(w), c(x0), c(xh0))
    return theta, theta_prev, eta, nu, gam, x, xh, e, u, y, z2


def simulate(model, ch_act, ch_sens, F, M, x0, xhat0, steps, trials=1, seed=0,
             noise_on=True, theta0=None, eta0=None) -> SimulationTrace:
    """Monte Carlo runs of the closed loop.

    Every trial draws from its own stream seeded by ``(seed, trial)``, so the
    output does not depend on how trials are scheduled.  ``theta0``/``eta0``
    pin the channel modes in force before step 0; by default they are drawn
    from the stationary distributions.
    """
    F = np.asarray(F, dtype=float)
    M = np.asarray(M, dtype=float)
    build_closed_loop(model, F, M)
    x0 = np.asarray(x0, dtype=float)
    xhat0 = np.asarray(xhat0, dtype=float)
    if x0.shape != (model.n_x,) or xhat0.shape != (model.n_x,):
        raise DimensionMismatch("initial states do not match the model")
    ids = np.arange(trials)
    n_threads = min(_thread_count(), max(1, trials // 256))
    chunks = np.array_split(ids, n_threads)
    args = (model, ch_act, ch_sens, F, M, x0, xhat0, steps)
    if n_threads == 1:
        parts = [_simulate_chunk(*args, ids, seed, noise_on, theta0, eta0)]
    else:
        with ThreadPoolExecutor(n_threads) as pool:
            parts = list(pool.map(
                lambda ch: _simulate_chunk(*args, ch, seed, noise_on, theta0, eta0), chunks))
    fields = [np.concatenate(p) for p in zip(*parts)]
    trace = SimulationTrace(*fields, seed=seed, noise_on=bool(noise_on))
    _check_bookkeeping(trace)
    return trace


def _check_bookkeeping(trace):
    scale = max(1.0, float(np.max(np.abs(trace.x))), float(np.max(np.abs(trace.xhat))))
    gap = float(np.max(np.abs(trace.x - trace.xhat - trace.e)))
    if gap > BOOKKEEPING_TOL * scale:
        raise RuntimeError(f"error bookkeeping drifted: max |x - xhat - e| = {gap:.3e}")


def empirical_moments(trace: SimulationTrace) -> dict:
    """Sample moments across trials at every step, with standard errors."""
    n = trace.trials
    if n < 2:
        raise InsufficientTrials("need at least two trials")
    e, x = trace.e, trace.x
    ee = e[..., :, None] * e[..., None, :]
    return {
        "mean_e": e.mean(axis=0),
        "se_mean_e": e.std(axis=0, ddof=1) / np.sqrt(n),
        "second_e": ee.mean(axis=0),
        "se_second_e": ee.std(axis=0, ddof=1) / np.sqrt(n),
        "second_x": (x[..., :, None] * x[..., None, :]).mean(axis=0),
        "trials": n,
    }


def augmented_operator(model, ch_act, ch_sens, F, M) -> OperatorMatrix:
    """Second-moment operator of ``[x; e]`` over (theta_k, theta_{k-1}, eta_k).

    Blocks are flattened as ``(i * N + l) * I + n``; the triple moves from
    (i, l, n) to (j, i, n') with probability ``P[i, j] Q[n, n']``.
    """
    cl = build_closed_loop(model, F, M)
    N, I = ch_act.n_modes, ch_sens.n_modes
    d2 = (2 * model.n_x) ** 2
    P, Q = ch_act.tpm, ch_sens.tpm
    nu_p, ga_p = ch_act.delivery_prob, ch_sens.delivery_prob
    rep = np.zeros((N * N * I * d2, N * N * I * d2))
    for i in range(N):
        for l in range(N):
            for n in range(I):
                step = np.zeros((d2, d2))
                for nu, pn in ((1, nu_p[i]), (0, 1 - nu_p[i])):
                    for g, pg in ((1, ga_p[n]), (0, 1 - ga_p[n])):
                        if pn * pg == 0.0:
                            continue
                        Gm = cl.gamma(nu, l, g, n)
                        step += pn * pg * np.kron(Gm.conj(), Gm)
                col = ((i * N + l) * I + n) * d2
                for j in range(N):
                    for n2 in range(I):
                        p = P[i, j] * Q[n, n2]
                        if p == 0.0:
                            continue
                        row = ((j * N + i) * I + n2) * d2
                        rep[row:row + d2, col:col + d2] += p * step
    return OperatorMatrix(rep, "augmented")


@dataclass
class SeparationReport:
    mss: bool
    rho_control: float
    rho_filter: float
    rho_augmented: float | None = None
    agree: bool | None = None

    @property
    def verdict(self):
        return "closed loop MSS" if self.mss else "not MSS"

    def to_dict(self):
        return {"verdict": self.verdict, "mss": self.mss, "rho_control": self.rho_control,
                "rho_filter": self.rho_filter, "rho_augmented": self.rho_augmented,
                "agree": self.agree}


def check_separation(model, ch_act, ch_sens, F, M) -> SeparationReport:
    """Mean-square stability of the closed loop from the two component radii.

    On small instances the full augmented operator is built as well and its
    verdict compared.
    """
    rho_c = spectral_radius(control_delay_operator(ch_act, model, F))
    rho_f = spectral_radius(matrix_rep_V(ch_sens, *filter_matrices(model, M)))
    report = SeparationReport(bool(rho_c < 1 and rho_f < 1), rho_c, rho_f)
    N, I = ch_act.n_modes, ch_sens.n_modes
    if N * N * I * (2 * model.n_x) ** 2 <= AUGMENTED_LIMIT:
        rho_a = spectral_radius(augmented_operator(model, ch_act, ch_sens, F, M))
        report.rho_augmented = rho_a
        report.agree = bool((rho_a < 1) == report.mss)
    return report


def moment_comparison(trace, model, ch_sens, M, eta0=None, steps=(1, 5, 10), z=3.0) -> dict:
    """Compare empirical error moments with the exact recursion at a few steps.

    ``eta0`` is the pinned sensing mode before step 0, if any; otherwise the
    stationary distribution is used, as in :func:`simulate`.
    """
    from .msops import initial_moments, propagate_moments

    emp = empirical_moments(trace)
    prev = None
    if eta0 is not None:
        prev = np.zeros(ch_sens.n_modes)
        prev[int(eta0)] = 1.0
    state = initial_moments(ch_sens, trace.e[0, 0], prev_dist=prev)
    steps = [k for k in steps if k <= trace.steps]
    rows = []
    ok = True
    for k in range(1, max(steps, default=0) + 1):
        state = propagate_moments(ch_sens, M, model, state)
        if k not in steps:
            continue
        s1 = _zscore(emp["mean_e"][k] - state.mean, emp["se_mean_e"][k])
        s2 = _zscore(emp["second_e"][k] - state.second_moment, emp["se_second_e"][k])
        ok &= bool(s1 <= z and s2 <= z)
        rows.append({"k": k, "max_z_mean": s1, "max_z_second": s2})
    return {"comparisons": rows, "flag": f"{'PASS' if ok else 'FAIL'} within {z:g}\u03c3"}


def _zscore(diff, se):
    # entries with zero spread must match exactly (up to roundoff)
    diff = np.abs(diff)
    tiny = se <= 1e-300
    if np.any(diff[tiny] > 1e-12):
        return float("inf")
    return float(np.max(np.where(tiny, 0.0, diff / np.where(tiny, 1.0, se)), initial=0.0))
