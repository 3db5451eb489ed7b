"""Finite-state Markov packet-loss channels.

A channel is a time-homogeneous Markov chain over ``S`` modes together with a
per-mode probability that a packet sent while the chain is in that mode is
delivered.  Modes are 0-based throughout the package.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import _backend
from .errors import (DimensionMismatch, IndexOutOfRange, InvalidInitialMode,
                     NotErgodic)

ROW_SUM_TOL = 1e-12
RENORMALIZE_TOL = 1e-9

_NUMBER_WORDS = {2: "two", 3: "three", 4: "four", 5: "five", 6: "six",
                 7: "seven", 8: "eight", 9: "nine", 10: "ten"}


@dataclass(frozen=True)
class MarkovChannel:
    """Transition matrix plus per-mode delivery probabilities.

    Rows whose sum is within ``1e-9`` of one are renormalized on construction
    (a warning is emitted); anything further off is kept as given so that
    :func:`validate_channel` can report it.
    """

    tpm: np.ndarray
    delivery_prob: np.ndarray
    stationary: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        tpm = np.array(self.tpm, dtype=float, ndmin=2)
        prob = np.array(self.delivery_prob, dtype=float, ndmin=1)
        if tpm.ndim == 2 and tpm.shape[0] == tpm.shape[1] and tpm.size:
            sums = tpm.sum(axis=1)
            off = np.abs(sums - 1.0)
            fix = (off > 0) & (off <= RENORMALIZE_TOL)
            if np.any(fix & (off > ROW_SUM_TOL)):
                warnings.warn(f"renormalizing TPM rows {np.flatnonzero(fix).tolist()}",
                              stacklevel=3)
            tpm[fix] /= sums[fix, None]
        tpm.setflags(write=False)
        prob.setflags(write=False)
        object.__setattr__(self, "tpm", tpm)
        object.__setattr__(self, "delivery_prob", prob)
        if self.stationary is not None:
            pi = np.array(self.stationary, dtype=float)
            pi.setflags(write=False)
            object.__setattr__(self, "stationary", pi)

    @property
    def n_modes(self) -> int:
        return self.tpm.shape[0]

    def stationary_or_compute(self) -> np.ndarray:
        if self.stationary is not None:
            return self.stationary
        pi = stationary_distribution(self.tpm)
        object.__setattr__(self, "stationary", pi)
        return pi

    @classmethod
    def from_dict(cls, data: dict) -> "MarkovChannel":
        return cls(np.asarray(data["tpm"], dtype=float),
                   np.asarray(data["delivery_prob"], dtype=float))

    def to_dict(self) -> dict:
        return {"tpm": self.tpm.tolist(), "delivery_prob": self.delivery_prob.tolist()}


@dataclass(frozen=True)
class ModePath:
    modes: np.ndarray
    deliveries: np.ndarray
    seed: int


def _closed_classes(tpm):
    """Return (labels, list of closed class labels) of the positive pattern graph."""
    adj = tpm > 0
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = labels == c
        if not adj[np.ix_(members, ~members)].any():
            closed.append(c)
    return labels, closed


def _period(adj):
    """Period of a strongly connected pattern: gcd of level differences along edges."""
    n = adj.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
        frontier = nxt
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        g = math.gcd(g, int(level[u] + 1 - level[v]))
    return g


def validate_channel(ch: MarkovChannel) -> list[str]:
    """Diagnostics for a channel; an empty list means the channel is usable."""
    tpm, prob = ch.tpm, ch.delivery_prob
    problems = []
    if tpm.ndim != 2 or tpm.shape[0] != tpm.shape[1] or tpm.shape[0] < 1:
        return [f"TPM must be a non-empty square matrix, got shape {tpm.shape}"]
    S = tpm.shape[0]
    if prob.shape != (S,):
        problems.append(f"delivery_prob has length {prob.size}, expected {S}")
    if not np.all(np.isfinite(tpm)) or np.any(tpm < 0) or np.any(tpm > 1):
        problems.append("TPM entries outside [0, 1]")
    if prob.size and (np.any(prob < 0) or np.any(prob > 1) or not np.all(np.isfinite(prob))):
        problems.append("delivery probabilities outside [0, 1]")
    for i, s in enumerate(tpm.sum(axis=1)):
        if abs(s - 1.0) > ROW_SUM_TOL:
            problems.append(f"row {i} sums to {s:.12g}")
    if problems:
        return problems

    labels, closed = _closed_classes(tpm)
    if len(closed) > 1:
        word = _NUMBER_WORDS.get(len(closed), str(len(closed)))
        problems.append(f"not ergodic: {word} closed classes")
    elif labels.max() > 0:
        transient = np.flatnonzero(labels != closed[0]).tolist()
        problems.append(f"not ergodic: transient modes {transient}")
    else:
        d = _period(tpm > 0)
        if d != 1:
            problems.append(f"not ergodic: periodic with period {d}")
    if ch.stationary is not None:
        pi = ch.stationary
        if pi.shape != (S,) or np.any(pi < 0) or abs(pi.sum() - 1) > ROW_SUM_TOL:
            problems.append("stationary vector is not a distribution")
        elif np.max(np.abs(pi @ tpm - pi)) > 1e-10:
            problems.append("stationary vector is not invariant under the TPM")
    return problems


def stationary_distribution(tpm, tol=1e-14, max_iter=1_000_000) -> np.ndarray:
    """Unique invariant distribution of an ergodic TPM by power iteration.

    Starts from the uniform vector.  Chains with several closed classes or a
    periodic recurrent class have no unique limit and raise
    :class:`NotErgodic`.
    """
    tpm = np.asarray(tpm, dtype=float)
    S = tpm.shape[0]
    labels, closed = _closed_classes(tpm)
    if len(closed) != 1:
        raise NotErgodic(f"{len(closed)} closed classes")
    members = labels == closed[0]
    if _period(tpm[np.ix_(members, members)] > 0) != 1:
        raise NotErgodic("recurrent class is periodic")

    pi = np.full(S, 1.0 / S)
    for _ in range(max_iter):
        nxt = pi @ tpm
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise NotErgodic(f"power iteration did not contract in {max_iter} steps")
    return pi


def joint_delivery_probability(ch: MarkovChannel, from_mode: int, to_mode: int,
                               delivered: int) -> float:
    """P(delivered bit, next mode = to_mode | current mode = from_mode)."""
    S = ch.n_modes
    if not (0 <= from_mode < S and 0 <= to_mode < S):
        raise IndexOutOfRange(f"mode indices ({from_mode}, {to_mode}) outside 0..{S - 1}")
    q = ch.tpm[from_mode, to_mode]
    g = ch.delivery_prob[to_mode]
    return float(g * q if delivered else (1.0 - g) * q)


def mode_probabilities(ch: MarkovChannel, initial, k: int) -> np.ndarray:
    initial = np.asarray(initial, dtype=float)
    if initial.shape != (ch.n_modes,):
        raise DimensionMismatch(f"initial distribution has shape {initial.shape}")
    return initial @ np.linalg.matrix_power(ch.tpm, k)


def transition_cdf(tpm) -> np.ndarray:
    cdf = np.cumsum(tpm, axis=1)
    cdf[:, -1] = 1.0
    return np.ascontiguousarray(cdf)


def sample_path(ch: MarkovChannel, initial_mode: int, length: int, seed: int) -> ModePath:
    """Sample ``length`` transitions starting at ``initial_mode``.

    Returns ``length + 1`` modes and one delivery bit per mode.
    """
    if not 0 <= initial_mode < ch.n_modes:
        raise InvalidInitialMode(f"initial mode {initial_mode} outside 0..{ch.n_modes - 1}")
    rng = np.random.Generator(np.random.PCG64(seed))
    u_mode = rng.random((1, length))
    u_bit = rng.random(length + 1)
    modes = _backend.kernels.chain_paths(transition_cdf(ch.tpm), u_mode,
                                         np.array([initial_mode], dtype=np.int64))[0]
    deliveries = (u_bit < ch.delivery_prob[modes]).astype(np.int8)
    return ModePath(modes, deliveries, seed)
