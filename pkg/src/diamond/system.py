"""Multi-Hamiltonian systems ``K z_t + L z_x = grad S(z)``.

``grad_S`` and ``hess_S`` must broadcast over leading axes: given ``z`` with
shape ``(..., n)`` they return ``(..., n)`` and ``(..., n, n)``.  The solvers
evaluate them on whole batches of diamonds at once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class InvalidSystemError(ValueError):
    """A system violates a structural requirement."""


@dataclass(frozen=True)
class MultiHamiltonianSystem:
    K: np.ndarray
    L: np.ndarray
    grad_S: Callable
    hess_S: Optional[Callable] = None
    S_value: Optional[Callable] = None
    lipschitz_const: Optional[float] = None
    S_matrix: Optional[np.ndarray] = None  # set for linear systems

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        L = np.array(self.L, dtype=float)
        K.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "L", L)
        if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape != L.shape:
            raise InvalidSystemError(f"K and L must be equal square matrices, got {K.shape} and {L.shape}")

    @property
    def n(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True)
class WaveSystem(MultiHamiltonianSystem):
    """``u_tt - u_xx = f(u)`` written with ``z = (u, u_t, u_x)``."""

    f: Callable = field(default=None, kw_only=True)
    f_prime: Optional[Callable] = field(default=None, kw_only=True)


WAVE_K = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
WAVE_L = np.array([[0, 0, 1], [0, 0, 0], [-1, 0, 0]], dtype=float)


def make_wave_system(f, f_prime=None, lipschitz_const=None, V=None) -> WaveSystem:
    """Wave equation ``u_tt - u_xx = f(u)``.

    With the fixed ``K`` and ``L`` the first row of the system reads
    ``-v_t + w_x = dS/du``, so the potential enters as ``dS/du = -f(u)``.
    ``V`` (optional, ``f = -V'``) enables ``S_value``.
    """

    def grad_S(z):
        z = np.asarray(z, dtype=float)
        g = np.empty_like(z)
        g[..., 0] = -f(z[..., 0])
        g[..., 1] = z[..., 1]
        g[..., 2] = -z[..., 2]
        return g

    hess_S = None
    if f_prime is not None:
        def hess_S(z):
            z = np.asarray(z, dtype=float)
            H = np.zeros(z.shape + (3,))
            H[..., 0, 0] = -f_prime(z[..., 0])
            H[..., 1, 1] = 1.0
            H[..., 2, 2] = -1.0
            return H

    S_value = None
    if V is not None:
        def S_value(z):
            z = np.asarray(z, dtype=float)
            return V(z[..., 0]) + 0.5 * z[..., 1] ** 2 - 0.5 * z[..., 2] ** 2

    return WaveSystem(WAVE_K, WAVE_L, grad_S, hess_S, S_value, lipschitz_const,
                      f=f, f_prime=f_prime)


def sine_gordon() -> WaveSystem:
    """``u_tt - u_xx = -sin u``; ``f`` has Lipschitz constant 1."""
    return make_wave_system(lambda u: -np.sin(u), lambda u: -np.cos(u),
                            lipschitz_const=1.0, V=lambda u: 1.0 - np.cos(u))


def _is_skew(M):
    return np.array_equal(M, -M.T)


def make_linear_system(K, L, S_matrix) -> MultiHamiltonianSystem:
    """Linear system ``K z_t + L z_x = S z`` with ``S`` symmetric."""
    K = np.array(K, dtype=float)
    L = np.array(L, dtype=float)
    S = np.array(S_matrix, dtype=float)
    if not _is_skew(K):
        raise InvalidSystemError("K not skew")
    if not _is_skew(L):
        raise InvalidSystemError("L not skew")
    if S.shape != K.shape or not np.array_equal(S, S.T):
        raise InvalidSystemError("S_matrix must be symmetric with the shape of K")
    S.setflags(write=False)

    def grad_S(z):
        return np.asarray(z, dtype=float) @ S.T

    def hess_S(z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(S, z.shape[:-1] + S.shape)

    def S_value(z):
        z = np.asarray(z, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", z, S, z)

    lip = float(np.abs(S).sum(axis=1).max()) if S.size else 0.0
    return MultiHamiltonianSystem(K, L, grad_S, hess_S, S_value, lip, S)


def validate_system(sys, n_points=10, rel_tol=1e-5, seed=0) -> list[str]:
    """Return human-readable diagnostics; empty when every check passes."""
    out = []
    K, L = sys.K, sys.L
    if not _is_skew(K):
        out.append("K not skew")
    if not _is_skew(L):
        out.append("L not skew")
    if isinstance(sys, WaveSystem):
        if not (np.array_equal(K, WAVE_K) and np.array_equal(L, WAVE_L)):
            out.append("wave system K/L differ from the canonical wave matrices")
    if sys.lipschitz_const is not None and sys.lipschitz_const < 0:
        out.append("lipschitz_const negative")

    rng = np.random.default_rng(seed)
    pts = rng.uniform(-2.0, 2.0, size=(n_points, sys.n))
    try:
        g = np.asarray(sys.grad_S(pts))
    except Exception as exc:  # noqa: BLE001 - reported as a diagnostic
        return out + [f"grad_S failed on a batch: {exc}"]
    if g.shape != pts.shape:
        out.append(f"grad_S returned shape {g.shape}, expected {pts.shape}")
        return out
    if sys.hess_S is None:
        return out

    H = np.asarray(sys.hess_S(pts))
    if H.shape != pts.shape + (sys.n,):
        out.append(f"hess_S returned shape {H.shape}")
        return out
    if not np.allclose(H, np.swapaxes(H, -1, -2), rtol=0, atol=1e-12):
        out.append("hess_S not symmetric")
    eps = 1e-6
    fd = np.empty_like(H)
    for k in range(sys.n):
        e = np.zeros(sys.n)
        e[k] = eps
        fd[..., :, k] = (np.asarray(sys.grad_S(pts + e)) - np.asarray(sys.grad_S(pts - e))) / (2 * eps)
    err = np.abs(fd - H).max()
    scale = max(1.0, np.abs(H).max())
    if err > rel_tol * scale:
        out.append(f"hess_S disagrees with finite differences of grad_S (max error {err:.2e})")
    return out
