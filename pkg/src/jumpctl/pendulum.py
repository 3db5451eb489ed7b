"""Inverted pendulum on a cart, sampled at 10 ms, over two 12-mode channels.

Only some TPM columns are known (columns 2..6 are below 1e-4 and not
given), so :func:`surrogate_tpm` rebuilds a full matrix: the missing mass
of each row is spread evenly over the unknown columns, and a tiny
probability ``eps`` of entering mode 0 is moved out of the last column so
that the chain is irreducible.
"""
from __future__ import annotations

import numpy as np

from .channels import MarkovChannel
from .model import MjlsModel

A = np.array([
    [1.000, 0.010, 0.000, 0.000],
    [0.000, 0.998, 0.027, 0.000],
    [0.000, 0.000, 1.002, 0.010],
    [0.000, -0.005, 0.312, 1.002],
])
B = 0.1 * np.array([[0.00091], [0.182], [0.0023], [0.474]])

QC = np.diag([1000.0, 0.1, 10000.0, 0.1])
RC = np.array([[1.0]])
NOISE_SCALE = 0.0002

X0 = np.array([0.0, 0.0, np.pi / 10, 0.0])
XHAT0 = np.array([1.0, 0.0, 11 * np.pi / 100, 0.0])

DELIVERY = np.array([0, 0.02, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.86, 0.99, 1])

# known entries per row: columns 1, 7, 8, 9 are shared; 10 and 11 vary
_COL10 = np.array([0.0071, 0.0070, 0.0070, 0.0069, 0.0069, 0.0069,
                   0.0069, 0.0069, 0.0069, 0.0069, 0.0068, 0.0063])
_COL11 = np.array([0.9922, 0.9923, 0.9924, 0.9924, 0.9924, 0.9924,
                   0.9924, 0.9924, 0.9924, 0.9924, 0.9925, 0.9931])
_UNKNOWN = slice(2, 7)
SURROGATE_EPS = 1e-6


def surrogate_tpm(eps=SURROGATE_EPS) -> np.ndarray:
    P = np.zeros((12, 12))
    P[:, 1] = 2e-4
    P[:, 7:10] = 1e-4
    P[:, 10] = _COL10
    P[:, 11] = _COL11
    residual = 1.0 - P.sum(axis=1)
    P[:, _UNKNOWN] = residual[:, None] / 5
    P[:, 0] = eps
    P[:, 11] -= eps
    return P


def pendulum_model() -> MjlsModel:
    G = np.hstack([np.vstack([np.eye(2), np.eye(2)]), np.zeros((4, 4))])
    H = np.hstack([np.zeros((4, 2)), np.eye(4)])
    return MjlsModel.from_weights(A, B, G, QC, RC, np.eye(4), H, NOISE_SCALE)


def pendulum_channel() -> MarkovChannel:
    return MarkovChannel(surrogate_tpm(), DELIVERY.astype(float))


def pendulum_config(steps=500, trials=20, seed=2021, noise_on=True) -> dict:
    ch = pendulum_channel().to_dict()
    return {
        "model": pendulum_model().to_dict(),
        "actuation_channel": ch,
        "sensing_channel": ch,
        "initial": {"x0": X0.tolist(), "xhat0": XHAT0.tolist(),
                    "theta0": "stationary", "eta0": "stationary"},
        "solver": {"tol": 1e-10, "max_iter": 100000},
        "sim": {"steps": steps, "trials": trials, "seed": seed, "noise_on": noise_on},
    }


def unstable_eigenvalue() -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A))))
