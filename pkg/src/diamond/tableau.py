"""Gauss-Legendre Runge-Kutta tableaux and the per-diamond solvability matrix."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nonlinear import SingularMatrixError, inf_norm, inf_norm_inverse, min_singular_value

MAX_STAGES = 8


@dataclass(frozen=True)
class GaussTableau:
    r: int
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    A_inv: np.ndarray

    @property
    def end_weights(self) -> np.ndarray:
        """``b^T A^{-1}``: extrapolates stage values to the far edge of the cell."""
        return self.b @ self.A_inv


def _legendre(r, x):
    """``P_r(x)`` and ``P_r'(x)`` by the three-term recurrence."""
    p0, p1 = np.ones_like(x), x.copy()
    if r == 0:
        return p0, np.zeros_like(x)
    for k in range(2, r + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = r * (x * p1 - p0) / (x * x - 1)
    return p1, dp


def gauss_nodes_weights(r):
    """Nodes and weights of r-point Gauss quadrature on [0, 1]."""
    k = np.arange(1, r + 1)
    x = -np.cos((4 * k - 1) * np.pi / (4 * r + 2))  # Chebyshev-like start, ascending
    for _ in range(100):
        p, dp = _legendre(r, x)
        dx = p / dp
        x = x - dx
        if np.abs(dx).max() < 1e-16:
            break
    _, dp = _legendre(r, x)
    w = 2.0 / ((1 - x * x) * dp * dp)
    return (x + 1) / 2, w / 2


def gauss_tableau(r: int) -> GaussTableau:
    if not isinstance(r, (int, np.integer)) or not 1 <= r <= MAX_STAGES:
        raise ValueError(f"stage count must be an integer in [1, {MAX_STAGES}], got {r!r}")
    r = int(r)
    c, b = gauss_nodes_weights(r)
    # a_ik = integral_0^{c_i} l_k(s) ds, exact with the r-point rule since deg l_k = r-1
    A = np.empty((r, r))
    for i in range(r):
        s = c[i] * c
        for k in range(r):
            others = np.delete(c, k)
            lk = np.prod((s[:, None] - others) / (c[k] - others), axis=1)
            A[i, k] = c[i] * (b @ lk)
    A_inv = np.linalg.inv(A)
    for arr in (A, b, c, A_inv):
        arr.setflags(write=False)
    return GaussTableau(r, A, b, c, A_inv)


@dataclass(frozen=True)
class SolvabilityMatrix:
    r: int
    lam: float
    B: np.ndarray


def build_B(tab: GaussTableau, lam: float) -> SolvabilityMatrix:
    """``(1-l^2)(I (x) M^2) + 2(1+l^2)(M (x) M) + (1-l^2)(M^2 (x) I)``, ``M = A^{-1}``.

    Unknowns are flattened as ``u[i*r + j] = u_i^j`` with ``i`` the x-stage and
    ``j`` the t-stage, so ``I (x) M^2`` acts on the t-stage index.
    """
    M = tab.A_inv
    I = np.eye(tab.r)
    M2 = M @ M
    B = (1 - lam**2) * np.kron(I, M2) + 2 * (1 + lam**2) * np.kron(M, M) \
        + (1 - lam**2) * np.kron(M2, I)
    return SolvabilityMatrix(tab.r, float(lam), B)


def max_stable_dt(B: SolvabilityMatrix, lipschitz_const: float) -> float:
    """Largest step for which the per-diamond fixed-point map is a contraction."""
    if not lipschitz_const > 0:
        raise ValueError("lipschitz_const must be positive")
    if min_singular_value(B.B) < 1e-12 * inf_norm(B.B):
        raise SingularMatrixError(f"solvability matrix is singular (r={B.r}, lambda={B.lam})")
    return float(np.sqrt(1.0 / (lipschitz_const * inf_norm_inverse(B.B))))


def solvability_table(rmax=5, n_lambda=21):
    """Rows ``(r, lambda, min singular value of B)`` over ``lambda`` in [0, 1]."""
    rows = []
    for r in range(1, rmax + 1):
        tab = gauss_tableau(r)
        for lam in np.linspace(0.0, 1.0, n_lambda):
            rows.append((r, float(lam), min_singular_value(build_B(tab, lam).B)))
    return rows
