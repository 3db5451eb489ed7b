"""Second-moment operators over mode-indexed block collections.

A block collection is an array of shape ``(S, n, n)``; block ``m`` belongs to
mode ``m``.  For a sensing channel with TPM ``Q`` and delivery probabilities
``g``, and per-mode matrices ``G1[n]`` (measurement delivered) and ``G0[n]``
(measurement lost), the operators are::

    D_n(S) = sum_m Q[m, n] S_m
    V_n(S) = g_n G1_n D_n(S) G1_n* + (1 - g_n) G0_n D_n(S) G0_n*
    J_m(S) = sum_n Q[m, n] (g_n G1_n* S_n G1_n + (1 - g_n) G0_n* S_n G0_n)

``J`` is the adjoint of ``V`` under ``<S; T> = sum_m tr(S_m* T_m)``.
Matrix representations act on the stacked column-major vectorization
returned by :func:`phi_hat`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConvergenceFailure, DimensionMismatch

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class OperatorMatrix:
    rep: np.ndarray
    kind: str


@dataclass(frozen=True)
class MomentState:
    """Error moments at step ``k``.

    ``m[n]`` and ``Y[n]`` are the first and second moments of the estimation
    error restricted to the event that the sensing mode at ``k - 1`` was
    ``n``; ``prev_dist`` is the distribution of that mode.
    """

    m: np.ndarray
    Y: np.ndarray
    k: int
    prev_dist: np.ndarray

    @property
    def mean(self):
        return self.m.sum(axis=0)

    @property
    def second_moment(self):
        return self.Y.sum(axis=0)


def as_blocks(S, n_modes=None) -> np.ndarray:
    S = np.asarray(S)
    if S.ndim == 2:
        S = S[None]
    if S.ndim != 3 or S.shape[1] != S.shape[2]:
        raise DimensionMismatch(f"block collection must be (S, n, n), got {S.shape}")
    if n_modes is not None and S.shape[0] != n_modes:
        raise DimensionMismatch(f"expected {n_modes} blocks, got {S.shape[0]}")
    return S


def hermitian_part(S):
    return 0.5 * (S + np.swapaxes(S, -1, -2).conj())


def inner(S, T) -> float:
    """<S; T> = sum_m tr(S_m* T_m)."""
    return np.einsum("mij,mij->", np.conj(S), T)


def phi_hat(S) -> np.ndarray:
    """Stack the column-major vectorizations of the blocks."""
    S = np.asarray(S)
    return np.swapaxes(S, -1, -2).reshape(-1)


def phi_hat_inv(v, n_modes, n) -> np.ndarray:
    return np.swapaxes(np.asarray(v).reshape(n_modes, n, n), -1, -2)


def op_D(tpm, S, n: int) -> np.ndarray:
    tpm = np.asarray(tpm)
    S = as_blocks(S, tpm.shape[0])
    return np.tensordot(tpm[:, n], S, axes=(0, 0))


def op_D_all(tpm, S) -> np.ndarray:
    tpm = np.asarray(tpm)
    S = as_blocks(S, tpm.shape[0])
    return np.einsum("mn,mij->nij", tpm, S)


def _gain_pair(ch, G1, G0, S):
    I = ch.n_modes
    G1 = as_blocks(G1, I) if np.ndim(G1) == 3 else np.broadcast_to(G1, (I,) + np.shape(G1))
    G0 = as_blocks(G0, I) if np.ndim(G0) == 3 else np.broadcast_to(G0, (I,) + np.shape(G0))
    S = as_blocks(S, I)
    if G1.shape != S.shape or G0.shape != S.shape:
        raise DimensionMismatch(f"operator matrices {G1.shape}/{G0.shape} vs blocks {S.shape}")
    return G1, G0, S


def _congruence(G, D):
    return G @ D @ np.swapaxes(G, -1, -2).conj()


def op_V(ch, G1, G0, S) -> np.ndarray:
    G1, G0, S = _gain_pair(ch, G1, G0, S)
    g = ch.delivery_prob[:, None, None]
    Dn = op_D_all(ch.tpm, S)
    return g * _congruence(G1, Dn) + (1 - g) * _congruence(G0, Dn)


def op_Vtilde(ch, Lam1, Lam0, S) -> np.ndarray:
    """Same operator as :func:`op_V`, built from a trial gain's matrices."""
    return op_V(ch, Lam1, Lam0, S)


def op_J(ch, G1, G0, S) -> np.ndarray:
    G1, G0, S = _gain_pair(ch, G1, G0, S)
    g = ch.delivery_prob[:, None, None]
    H1 = np.swapaxes(G1, -1, -2).conj()
    H0 = np.swapaxes(G0, -1, -2).conj()
    inner_n = g * _congruence(H1, S) + (1 - g) * _congruence(H0, S)
    return np.einsum("mn,nij->mij", ch.tpm, inner_n)


def _block_diag(blocks):
    k, r, c = blocks.shape
    out = np.zeros((k * r, k * c), dtype=blocks.dtype)
    for i, b in enumerate(blocks):
        out[i * r:(i + 1) * r, i * c:(i + 1) * c] = b
    return out


def matrix_rep_V(ch, G1, G0) -> OperatorMatrix:
    """Matrix acting on ``phi_hat(S)`` that reproduces ``phi_hat(V(S))``."""
    I = ch.n_modes
    G1 = np.broadcast_to(G1, (I,) + np.shape(G1)[-2:])
    G0 = np.broadcast_to(G0, (I,) + np.shape(G0)[-2:])
    n = G1.shape[-1]
    g = ch.delivery_prob
    kr = np.stack([g[m] * np.kron(G1[m].conj(), G1[m])
                   + (1 - g[m]) * np.kron(G0[m].conj(), G0[m]) for m in range(I)])
    coupling = np.kron(ch.tpm.T, np.eye(n * n))
    return OperatorMatrix(_block_diag(kr) @ coupling, "V")


def matrix_rep_J(ch, G1, G0) -> OperatorMatrix:
    return OperatorMatrix(matrix_rep_V(ch, G1, G0).rep.conj().T, "J")


def matrix_rep_firstmoment(ch, G1, G0) -> OperatorMatrix:
    I = ch.n_modes
    G1 = np.broadcast_to(G1, (I,) + np.shape(G1)[-2:])
    G0 = np.broadcast_to(G0, (I,) + np.shape(G0)[-2:])
    n = G1.shape[-1]
    g = ch.delivery_prob[:, None, None]
    mix = g * G1 + (1 - g) * G0
    return OperatorMatrix(_block_diag(mix) @ np.kron(ch.tpm.T, np.eye(n)), "B-firstmoment")


def spectral_radius(op) -> float:
    """Largest eigenvalue modulus.

    Dense eigensolver up to ``DENSE_LIMIT``; Arnoldi iteration beyond.
    """
    rep = op.rep if isinstance(op, OperatorMatrix) else np.asarray(op)
    if rep.size == 0:
        return 0.0
    if rep.shape[0] <= DENSE_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvals(rep))))
    try:
        vals = spla.eigs(rep, k=1, which="LM", tol=1e-10, maxiter=100_000,
                         return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return float(np.abs(vals[0]))


def filter_matrices(model, M):
    """(G1, G0) of the estimation-error operator for per-mode gains ``M``."""
    M = np.asarray(M, dtype=float)
    G1 = model.A[None] + M @ model.L
    G0 = np.broadcast_to(model.A, G1.shape)
    return G1, G0


def noise_injection(ch, model, M, weights) -> np.ndarray:
    """Per-mode noise term ``w_n * alpha * (GG* + g_n M_n HH* M_n*)``."""
    M = np.asarray(M, dtype=float)
    g = ch.delivery_prob[:, None, None]
    MHM = M @ model.HH @ np.swapaxes(M, -1, -2)
    return (np.asarray(weights)[:, None, None] * model.noise_scale
            * (model.GG[None] + g * MHM))


def initial_moments(ch, mean, second_moment=None, prev_dist=None) -> MomentState:
    """Moments at step 0 given the initial error statistics.

    ``prev_dist`` is the distribution of the sensing mode before step 0
    (stationary by default).
    """
    mean = np.asarray(mean, dtype=float)
    if second_moment is None:
        second_moment = np.outer(mean, mean)
    if prev_dist is None:
        prev_dist = ch.stationary_or_compute()
    p = np.asarray(prev_dist, dtype=float)
    return MomentState(p[:, None] * mean[None], p[:, None, None] * second_moment[None], 0, p)


def propagate_moments(ch, M, model, state: MomentState) -> MomentState:
    """Advance the error moments one step under filter gains ``M``."""
    if state.Y.shape != (ch.n_modes, model.n_x, model.n_x):
        raise DimensionMismatch(f"moment blocks {state.Y.shape} do not fit the model")
    G1, G0 = filter_matrices(model, M)
    pi_k = state.prev_dist @ ch.tpm
    Y = hermitian_part(op_V(ch, G1, G0, state.Y) + noise_injection(ch, model, M, pi_k))
    m = matrix_rep_firstmoment(ch, G1, G0).rep @ state.m.reshape(-1)
    return MomentState(m.reshape(state.m.shape), Y, state.k + 1, pi_k)


def is_ms_detectable_with_gain(ch, model, M) -> tuple[bool, float]:
    G1, G0 = filter_matrices(model, M)
    rho = spectral_radius(matrix_rep_V(ch, G1, G0))
    return rho < 1.0, rho


def control_delay_operator(ch_act, model, F) -> OperatorMatrix:
    """Second-moment operator of ``x+ = (A + nu B F_{theta_prev}) x``.

    Blocks are indexed by the pair (current mode i, previous mode l), flattened
    as ``i * N + l``.  The pair moves from (i, l) to (j, i) with probability
    ``P[i, j]``; the step matrix is ``A + B F_l`` with probability ``nu_i`` and
    ``A`` otherwise.
    """
    F = np.asarray(F, dtype=float)
    N = ch_act.n_modes
    if F.ndim != 3 or F.shape[0] != N or F.shape[1:] != (model.n_u, model.n_x):
        raise DimensionMismatch(f"gains must be ({N}, {model.n_u}, {model.n_x}), got {F.shape}")
    n2 = model.n_x ** 2
    A = model.A
    kA = np.kron(A.conj(), A)
    K = A[None] + model.B @ F
    kK = [np.kron(Kl.conj(), Kl) for Kl in K]
    P, v = ch_act.tpm, ch_act.delivery_prob
    rep = np.zeros((N * N * n2, N * N * n2))
    for i in range(N):
        for l in range(N):
            step = v[i] * kK[l] + (1 - v[i]) * kA
            col = (i * N + l) * n2
            for j in range(N):
                if P[i, j] == 0.0:
                    continue
                row = (j * N + i) * n2
                rep[row:row + n2, col:col + n2] = P[i, j] * step
    return OperatorMatrix(rep, "control-T")


def is_ms_stabilizing_control_gain(ch_act, model, F) -> tuple[bool, float]:
    rho = spectral_radius(control_delay_operator(ch_act, model, F))
    return rho < 1.0, rho
