"""Plant matrices of the networked MJLS and a single-step simulator."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ValidationError

PSD_TOL = 1e-10


def _mat(a):
    return np.array(a, dtype=float, ndmin=2)


@dataclass(frozen=True)
class MjlsModel:
    """Constant matrices of the plant.

    ``x+ = A x + nu B u + G w``, ``y = gamma (L x + H w)``, ``z = C x + nu D u``,
    with ``E[w w'] = noise_scale * I``.
    """

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    C: np.ndarray
    D: np.ndarray
    L: np.ndarray
    H: np.ndarray
    noise_scale: float = 1.0

    def __post_init__(self):
        for name in "ABGCDLH":
            arr = _mat(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "noise_scale", float(self.noise_scale))

    @property
    def n_x(self):
        return self.A.shape[0]

    @property
    def n_u(self):
        return self.B.shape[1]

    @property
    def n_y(self):
        return self.L.shape[0]

    @property
    def n_w(self):
        return self.G.shape[1]

    @property
    def Qc(self):
        return self.C.T @ self.C

    @property
    def Rc(self):
        return self.D.T @ self.D

    @property
    def GG(self):
        return self.G @ self.G.T

    @property
    def HH(self):
        return self.H @ self.H.T

    @classmethod
    def from_weights(cls, A, B, G, Qc, Rc, L, H, noise_scale=1.0):
        """Build C and D from the weights ``C'C = Qc`` and ``D'D = Rc``.

        The factors are stacked so that ``C'D = 0`` holds exactly.
        """
        Qc, Rc = _mat(Qc), _mat(Rc)
        cq = _psd_sqrt(Qc)
        cr = _psd_sqrt(Rc)
        nq, nr = cq.shape[0], cr.shape[0]
        C = np.vstack([cq, np.zeros((nr, Qc.shape[0]))])
        D = np.vstack([np.zeros((nq, Rc.shape[0])), cr])
        return cls(A, B, G, C, D, L, H, noise_scale)

    @classmethod
    def from_dict(cls, data: dict) -> "MjlsModel":
        A = _mat(data["A"])
        B = _mat(data["B"])
        common = dict(G=data["G"], L=data["L"], H=data["H"],
                      noise_scale=data.get("noise_scale", 1.0))
        if "C" in data and "D" in data:
            return cls(A, B, C=data["C"], D=data["D"], **common)
        if "Qc" in data and "Rc" in data:
            return cls.from_weights(A, B, Qc=data["Qc"], Rc=data["Rc"], **common)
        raise ValidationError("model needs either C and D or Qc and Rc")

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABGCDLH"} | {
            "noise_scale": self.noise_scale}


def _psd_sqrt(P):
    """Symmetric square root of a PSD matrix (negative roundoff clipped)."""
    P = 0.5 * (P + P.T)
    vals, vecs = np.linalg.eigh(P)
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def _min_eig(P):
    return float(np.linalg.eigvalsh(0.5 * (P + P.T)).min())


def validate_model(m: MjlsModel) -> list[str]:
    """Dimension checks and the standing matrix assumptions, as diagnostics."""
    problems = []
    nx = m.A.shape[0]
    if m.A.shape != (nx, nx):
        problems.append(f"A must be square, got {m.A.shape}")
    if m.B.shape[0] != nx:
        problems.append(f"B has {m.B.shape[0]} rows, expected {nx}")
    if m.G.shape[0] != nx:
        problems.append(f"G has {m.G.shape[0]} rows, expected {nx}")
    if m.L.shape[1] != nx:
        problems.append(f"L has {m.L.shape[1]} columns, expected {nx}")
    if m.H.shape[0] != m.L.shape[0]:
        problems.append(f"H has {m.H.shape[0]} rows, expected {m.L.shape[0]}")
    if m.H.shape[1] != m.G.shape[1]:
        problems.append(f"H has {m.H.shape[1]} columns, G has {m.G.shape[1]}")
    if m.C.shape[1] != nx:
        problems.append(f"C has {m.C.shape[1]} columns, expected {nx}")
    if m.D.shape != (m.C.shape[0], m.B.shape[1]):
        problems.append(f"D has shape {m.D.shape}, expected {(m.C.shape[0], m.B.shape[1])}")
    if m.noise_scale < 0 or not np.isfinite(m.noise_scale):
        problems.append("noise_scale must be a nonnegative number")
    if problems:
        return problems

    if _min_eig(m.GG) < -PSD_TOL:
        problems.append("GG* not positive semidefinite")
    if np.max(np.abs(m.G @ m.H.T), initial=0.0) > PSD_TOL:
        problems.append("GH* ≠ 0")
    if m.HH.size == 0 or _min_eig(m.HH) <= PSD_TOL:
        problems.append("HH* not positive definite")
    if np.max(np.abs(m.C.T @ m.D), initial=0.0) > PSD_TOL:
        problems.append("C*D ≠ 0")
    if m.Rc.size == 0 or _min_eig(m.Rc) <= PSD_TOL:
        problems.append("D*D not positive definite")
    return problems


def plant_step(m: MjlsModel, x, u, nu, gamma, w):
    """One step of the plant; returns ``(x_next, y, z)``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (m.n_x,) or u.shape != (m.n_u,) or w.shape != (m.n_w,):
        raise DimensionMismatch(
            f"expected x{(m.n_x,)}, u{(m.n_u,)}, w{(m.n_w,)}; "
            f"got {x.shape}, {u.shape}, {w.shape}")
    x_next = m.A @ x + nu * (m.B @ u) + m.G @ w
    y = gamma * (m.L @ x + m.H @ w)
    z = m.C @ x + nu * (m.D @ u)
    return x_next, y, z


def draw_noise(m: MjlsModel, seed: int, k: int) -> np.ndarray:
    """Gaussian noise sample for step ``k``, reproducible from ``(seed, k)``."""
    if m.noise_scale == 0.0:
        return np.zeros(m.n_w)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, k])))
    return np.sqrt(m.noise_scale) * rng.standard_normal(m.n_w)
