"""Pure numpy implementations of the simulation kernels.

Same signatures and semantics as the compiled ``_kernels`` module; loops run
over time with all trials vectorized.
"""
import numpy as np


def chain_paths(cdf, u, init):
    """Inverse-CDF sampling of Markov chain paths.

    ``cdf`` is the row-wise cumulative TPM, ``u`` has shape (trials, T) and
    ``init`` holds the starting mode per trial.  Returns (trials, T + 1) modes.
    """
    trials, T = u.shape
    S = cdf.shape[0]
    modes = np.empty((trials, T + 1), dtype=np.int64)
    modes[:, 0] = init
    cur = np.asarray(init, dtype=np.int64)
    for t in range(T):
        cur = np.minimum((cdf[cur] <= u[:, t, None]).sum(axis=1), S - 1)
        modes[:, t + 1] = cur
    return modes


def closed_loop(A, B, G, C, D, L, H, F, M, theta_prev, eta, nu, gam, w, x0, xh0):
    """Propagate plant, observer and estimation error for every trial.

    ``theta_prev[:, k]`` is the actuation mode the controller uses at step k,
    ``eta``, ``nu``, ``gam`` the sensing mode and delivery bits at step k, and
    ``w`` the already-scaled noise.  All have T + 1 columns; the state is
    advanced T times and the outputs at step T are still reported.
    """
    trials, T1 = eta.shape
    nx, nu_dim, ny = A.shape[0], B.shape[1], L.shape[0]
    x = np.empty((trials, T1, nx))
    xh = np.empty((trials, T1, nx))
    e = np.empty((trials, T1, nx))
    u = np.empty((trials, T1, nu_dim))
    y = np.empty((trials, T1, ny))
    z2 = np.empty((trials, T1))
    xc = np.broadcast_to(x0, (trials, nx)).copy()
    xhc = np.broadcast_to(xh0, (trials, nx)).copy()
    ec = xc - xhc
    for k in range(T1):
        x[:, k], xh[:, k], e[:, k] = xc, xhc, ec
        vk = nu[:, k].astype(float)[:, None]
        gk = gam[:, k].astype(float)[:, None]
        wk = w[:, k]
        uk = np.einsum("tij,tj->ti", F[theta_prev[:, k]], xhc)
        yk = gk * (xc @ L.T + wk @ H.T)
        zk = xc @ C.T + vk * (uk @ D.T)
        u[:, k], y[:, k] = uk, yk
        z2[:, k] = np.einsum("ti,ti->t", zk, zk)
        if k == T1 - 1:
            break
        Mk = M[eta[:, k]]
        bu = vk * (uk @ B.T)
        xn = xc @ A.T + bu + wk @ G.T
        innov = yk - gk * (xhc @ L.T)
        xhn = xhc @ A.T + bu - np.einsum("tij,tj->ti", Mk, innov)
        en = ec @ A.T + gk * np.einsum("tij,tj->ti", Mk, ec @ L.T) \
            + wk @ G.T + gk * np.einsum("tij,tj->ti", Mk, wk @ H.T)
        xc, xhc, ec = xn, xhn, en
    return x, xh, e, u, y, z2
