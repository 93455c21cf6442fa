"""Linear dispersion and stability of the diamond schemes.

For a linear system with constant symmetric ``S`` a plane wave
``exp(i(xi x - omega t))`` solves the PDE when ``p(xi, omega) = 0``.  The
simple scheme (and the r=1 scheme) admit a discrete plane wave with scaled
wavenumber and frequency ``(x, y) = (X dx, Omega dt)`` in ``[-pi, pi]^2``
exactly when ``p(h(x, y)) = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import transform_coeffs_raw
from .nonlinear import det_complex
from .system import WAVE_K, WAVE_L

POLE_TOL = 1e-14


class PoleError(ValueError):
    """Evaluation at a pole of ``h`` or of a tangent."""


@dataclass(frozen=True)
class DispersionProblem:
    K: np.ndarray | None = None
    L: np.ndarray | None = None
    S_matrix: np.ndarray | None = None
    custom_p: Callable | None = None

    def __post_init__(self):
        has_matrix = self.K is not None and self.L is not None and self.S_matrix is not None
        if has_matrix == (self.custom_p is not None):
            raise ValueError("give either (K, L, S_matrix) or custom_p")


@dataclass(frozen=True)
class DiscreteGeometry:
    dx: float
    dt: float

    def __post_init__(self):
        if not (self.dx > 0 and self.dt > 0):
            raise ValueError("dx and dt must be positive")

    @property
    def lam(self) -> float:
        return self.dt / self.dx

    @classmethod
    def from_lambda(cls, lam, dx=1.0):
        return cls(dx, lam * dx)


def wave_problem() -> DispersionProblem:
    """Zero-potential wave equation: ``p = xi^2 - omega^2``."""
    return DispersionProblem(WAVE_K, WAVE_L, np.diag([0.0, 1.0, -1.0]))


def cubic_problem() -> DispersionProblem:
    """Scalar relation ``p = omega - xi + xi^3``."""
    return DispersionProblem(custom_p=lambda xi, om: om - xi + xi**3)


def _symbol(prob, a, b):
    """``det(-i a K + i b L - S)`` broadcast over ``a`` and ``b``."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    M = (-1j * a[..., None, None] * prob.K + 1j * b[..., None, None] * prob.L
         - prob.S_matrix)
    return det_complex(M)


def p_continuous(prob: DispersionProblem, xi, omega):
    if prob.custom_p is not None:
        return np.asarray(prob.custom_p(np.asarray(xi, float), np.asarray(omega, float)),
                          dtype=complex)
    return _symbol(prob, omega, xi)


def h_map(x, y, geom: DiscreteGeometry):
    """``(xi, omega)`` whose continuous plane wave matches the discrete one."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    den = np.cos(x / 2) + np.cos(y / 2)
    if np.any(np.abs(den) < POLE_TOL):
        raise PoleError("h has a pole where cos(x/2) + cos(y/2) = 0")
    return 4 * np.sin(x / 2) / (geom.dx * den), 4 * np.sin(y / 2) / (geom.dt * den)


def P_simple(prob, x, y, geom):
    """Discrete dispersion function of the simple scheme at ``(X dx, Omega dt)``."""
    return p_continuous(prob, *h_map(x, y, geom))


def P_r1(prob, xt, ot, geom):
    """Dispersion function of the r=1 scheme in unit-square coordinates."""
    if prob.custom_p is not None:
        raise ValueError("P_r1 needs the matrix form of the problem")
    xt, ot = np.broadcast_arrays(np.asarray(xt, dtype=float), np.asarray(ot, dtype=float))
    if np.any(np.abs(np.cos(xt / 2)) < POLE_TOL) or np.any(np.abs(np.cos(ot / 2)) < POLE_TOL):
        raise PoleError("tan pole at |argument| = pi")
    co = transform_coeffs_raw(prob.K, prob.L, geom.dx, geom.dt)
    M = (-2j * np.tan(ot / 2)[..., None, None] * co.K_tilde
         + 2j * np.tan(xt / 2)[..., None, None] * co.L_tilde - prob.S_matrix)
    return det_complex(M)


def to_square_frequencies(x, y):
    """``(X~, Omega~)`` for scaled physical ``(X dx, Omega dt)``."""
    return (np.asarray(x) - np.asarray(y)) / 2, (np.asarray(x) + np.asarray(y)) / 2


def jacobian_h(x, y, geom):
    """Jacobian of ``h`` (``(..., 2, 2)``) and its determinant."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    cx, cy, sx, sy = np.cos(x / 2), np.cos(y / 2), np.sin(x / 2), np.sin(y / 2)
    den = cx + cy
    if np.any(np.abs(den) < POLE_TOL):
        raise PoleError("h has a pole where cos(x/2) + cos(y/2) = 0")
    pre = 2 / (geom.dt * den**2)
    lam = geom.lam
    J = np.empty(x.shape + (2, 2))
    J[..., 0, 0] = lam * (1 + cx * cy)
    J[..., 0, 1] = lam * sx * sy
    J[..., 1, 0] = sx * sy
    J[..., 1, 1] = 1 + cx * cy
    J *= pre[..., None, None]
    return J, np.linalg.det(J)


def wave_stability_curve(x, lam):
    """``Omega dt`` of the discrete wave mode at ``X dx = x``; ``None`` if none is real."""
    s = lam * np.sin(x / 2)
    if abs(s) > 1:
        return None
    return 2 * float(np.arcsin(s))


def boundary_curve(xi, geom):
    """Positive frequency bound ``|h_2(x, +-pi)|`` at wavenumber ``xi``."""
    return 4 / geom.dt * np.sqrt(1 + (geom.dx * np.asarray(xi, dtype=float) / 4) ** 2)


def wave_stable(geom) -> bool:
    """Whether ``omega = +-xi`` stays inside the boundary curves for every ``xi``.

    ``xi^2 <= 16/dt^2 + xi^2/lam^2`` for all ``xi`` iff ``lam <= 1``.
    """
    return 1.0 - 1.0 / geom.lam**2 <= 0.0


def bisect_roots(fun, lo, hi, n_grid=512, tol=1e-13, max_iter=200):
    """All sign-change roots of ``fun`` (vectorized over a 1-d array) in ``[lo, hi]``.

    Non-finite samples break the bracket.  A bracket that closes on a sign
    change through a pole is dropped because ``|fun|`` grows there instead
    of vanishing.
    """
    t = np.linspace(lo, hi, n_grid + 1)
    v = np.real(fun(t))
    roots = list(t[v == 0])
    ok = np.isfinite(v[:-1]) & np.isfinite(v[1:]) & (v[:-1] * v[1:] < 0)
    a, b = t[:-1][ok], t[1:][ok]
    fa = v[:-1][ok]
    scale = np.maximum(np.abs(v[:-1][ok]), np.abs(v[1:][ok]))
    for _ in range(max_iter):
        if a.size == 0 or np.max(b - a) < tol:
            break
        m = 0.5 * (a + b)
        fm = np.real(fun(m))
        left = np.sign(fm) == np.sign(fa)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
    mid = 0.5 * (a + b)
    if mid.size:
        keep = np.abs(np.real(fun(mid))) <= scale
        mid = mid[keep]
    roots.extend(mid)
    return np.sort(np.asarray(roots))


def P_simple_masked(prob, x, y, geom):
    """``P_simple`` with ``NaN`` at the poles of ``h`` instead of an error."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    ok = np.abs(np.cos(x / 2) + np.cos(y / 2)) >= POLE_TOL
    out = np.full(x.shape, np.nan, dtype=complex)
    if ok.any():
        out[ok] = P_simple(prob, x[ok], y[ok], geom)
    return out


def simple_roots_at(prob, x, geom, resolution=512, tol=1e-13):
    """Scaled frequencies ``y`` with ``P_simple(x, y) = 0`` at fixed ``x``."""
    return bisect_roots(lambda y: P_simple_masked(prob, np.full_like(y, x), y, geom),
                        -np.pi, np.pi, resolution, tol)


def discrete_zero_set(prob, geom, resolution=512, tol=1e-13):
    """Points ``(x, y)`` of ``P_simple = 0`` in ``[-pi, pi]^2`` from both line families."""
    lines = np.linspace(-np.pi, np.pi, resolution + 1)
    pts = []
    for c in lines:
        for r in simple_roots_at(prob, c, geom, resolution, tol):
            pts.append((c, r))
        for r in bisect_roots(lambda x: P_simple_masked(prob, x, np.full_like(x, c), geom),
                              -np.pi, np.pi, resolution, tol):
            pts.append((r, c))
    return np.array(pts).reshape(-1, 2)


def continuous_zero_set(prob, xi_max, omega_max, resolution=512, tol=1e-13):
    """Points ``(xi, omega)`` of ``p = 0`` on the window ``|xi| <= xi_max, |omega| <= omega_max``."""
    pts = []
    for xi in np.linspace(-xi_max, xi_max, resolution + 1):
        for om in bisect_roots(lambda o: p_continuous(prob, np.full_like(o, xi), o),
                               -omega_max, omega_max, resolution, tol):
            pts.append((xi, om))
    return np.array(pts).reshape(-1, 2)


LINEAR_LAMBDAS = (2.0, 1.0, 0.5)
CUBIC_LAMBDAS = (2.0, 1.0, 0.025)


def emit_dispersion_curves(prob, dx=1.0, lambdas=LINEAR_LAMBDAS, resolution=512):
    """Rows ``(curve_id, xi, omega, x, y)`` for the continuous and discrete curves.

    Continuous rows carry ``NaN`` for ``x, y``.  Discrete rows carry the
    root ``(x, y)`` and its image ``h(x, y)``, which lies on the continuous
    curve.
    """
    rows = []
    dt_min = min(lambdas) * dx
    xi_max = np.pi / dx
    omega_max = float(np.max(np.abs(boundary_curve(xi_max, DiscreteGeometry(dx, dt_min)))))
    if prob.custom_p is not None:
        grid = np.linspace(-xi_max, xi_max, 65)
        omega_max = max(omega_max, 2 * float(np.max(np.abs(grid - grid**3))))
    for xi, om in continuous_zero_set(prob, xi_max, omega_max, resolution):
        rows.append(("continuous", xi, om, np.nan, np.nan))
    for lam in lambdas:
        geom = DiscreteGeometry(dx, lam * dx)
        pts = discrete_zero_set(prob, geom, resolution)
        if len(pts):
            xi, om = h_map(pts[:, 0], pts[:, 1], geom)
            for k in range(len(pts)):
                rows.append((f"lambda={lam:g}", xi[k], om[k], pts[k, 0], pts[k, 1]))
    return rows
