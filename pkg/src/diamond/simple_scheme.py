"""Corner-based simple diamond scheme.

Each diamond has corners left ``z_{-1}^0``, bottom ``z_0^{-1}``, right
``z_1^0`` and top ``z_0^1``; the top is found from

    K (top - bottom)/dt + L (right - left)/dx = grad S(center),
    center = (top + bottom + left + right)/4,

independently for every diamond.  Level ``j`` stores the ``N`` corners
``z(a + i dx/2, j dt/2)`` with ``i = 2k + j % 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nonlinear import SolverConfig, SolverError, fixed_point, lu_solve, newton
from .parallel import map_diamonds
from .system import WaveSystem


class DiamondSolveError(SolverError):
    """A per-diamond solve failed; carries its mesh location."""

    def __init__(self, message, level=None, diamond=None, iterations=None, residual=None):
        super().__init__(message, iterations, residual)
        self.level = level
        self.diamond = diamond

    @classmethod
    def wrap(cls, exc, level):
        diamond = None if exc.failed is None or not len(exc.failed) else int(exc.failed[0])
        return cls(f"level {level}, diamond {diamond}: {exc}", level, diamond,
                   exc.iterations, exc.residual)


@dataclass
class CornerGrid:
    level: int
    values: np.ndarray  # (N, n), entry k at i = 2k + level % 2

    def index(self, N=None):
        N = len(self.values) if N is None else N
        return 2 * np.arange(N) + self.level % 2

    def coords(self, params):
        x = params.a + self.index(params.N) * params.dx / 2
        return x, np.full(len(x), self.level * params.dt / 2)


def _eval_map(z, x):
    return np.asarray(z(x), dtype=float).reshape(len(x), -1)


def simple_init(z0, z0_t, params):
    """Level 0 from ``z0``; level 1 by a forward Euler step of ``dt/2``.

    ``z0`` and ``z0_t`` map an array of ``x`` to an ``(len(x), n)`` array.
    """
    g0 = CornerGrid(0, None)
    x0, _ = g0.coords(params)
    g0.values = _eval_map(z0, x0)
    g1 = CornerGrid(1, None)
    x1, _ = g1.coords(params)
    g1.values = _eval_map(z0, x1) + params.dt / 2 * _eval_map(z0_t, x1)
    return g0, g1


def simple_init_exact(z_exact, params):
    """Both starting levels sampled from an exact solution ``z(x, t)``."""
    grids = []
    for level in (0, 1):
        g = CornerGrid(level, None)
        x, t = g.coords(params)
        g.values = np.asarray(z_exact(x, t), dtype=float).reshape(len(x), -1)
        grids.append(g)
    return tuple(grids)


def _fd_jacobian(fun, z, eps=1e-7):
    f0 = fun(z)
    m = z.shape[-1]
    J = np.empty(z.shape + (m,))
    for k in range(m):
        h = eps * np.maximum(1.0, np.abs(z[..., k]))
        zp = z.copy()
        zp[..., k] += h
        J[..., :, k] = (fun(zp) - f0) / h[..., None]
    return J


def simple_diamond_update(sys, z_left, z_bottom, z_right, params, cfg=SolverConfig()):
    """Top corners for a batch of diamonds (arrays of shape ``(B, n)`` or ``(n,)``)."""
    zl, zb, zr = (np.asarray(v, dtype=float) for v in (z_left, z_bottom, z_right))
    single = zl.ndim == 1
    zl, zb, zr = np.atleast_2d(zl), np.atleast_2d(zb), np.atleast_2d(zr)
    Kdt = sys.K / params.dt
    known = -(zb @ Kdt.T) + (zr - zl) @ (sys.L / params.dx).T
    rest = zb + zl + zr

    def F(z, idx):
        return z @ Kdt.T + known[idx] - sys.grad_S((z + rest[idx]) / 4)

    def J(z, idx):
        if sys.hess_S is not None:
            return Kdt - sys.hess_S((z + rest[idx]) / 4) / 4
        return _fd_jacobian(lambda y: F(y, idx), z)

    guess = zl + zr - zb
    method = cfg.method
    if method == "auto":
        method = "newton" if sys.hess_S is not None else "fixed_point"
    if method == "newton":
        z, _ = newton(F, J, guess, cfg, indexed=True)
    else:
        # chord iteration z <- z - J0^{-1} F(z), Jacobian frozen at the guess
        J0 = J(guess, np.arange(len(guess)))
        z, _ = fixed_point(lambda z, idx: z - lu_solve(J0[idx], F(z, idx)), guess, cfg,
                           indexed=True)
    return z[0] if single else z


def simple_wave_update(sys: WaveSystem, z_left, z_bottom, z_right, params, cfg=SolverConfig()):
    """Wave-family update reduced to one scalar equation per diamond.

    ``w`` on top follows linearly from the known ``u`` values, ``v`` on top is
    eliminated, and ``u`` on top solves ``u = C + dt^2/4 f(center u)``.
    """
    zl, zb, zr = (np.asarray(v, dtype=float) for v in (z_left, z_bottom, z_right))
    single = zl.ndim == 1
    zl, zb, zr = np.atleast_2d(zl), np.atleast_2d(zb), np.atleast_2d(zr)
    dt, dx = params.dt, params.dx
    ul, vl, wl = zl.T
    ub, vb, wb = zb.T
    ur, vr, wr = zr.T
    w_top = 4 * (ur - ul) / dx - wb - wr - wl
    C = ub + dt / 4 * (2 * vb + vr + vl) + dt**2 * (wr - wl) / (4 * dx)
    known_u = ub + ul + ur
    a = dt**2 / 4
    f = sys.f

    method = cfg.method
    if method == "auto":
        method = "newton" if sys.f_prime is not None else "fixed_point"
    if method == "newton":
        fp = sys.f_prime
        u, _ = newton(
            lambda u, idx: u - C[idx, None] - a * f((u + known_u[idx, None]) / 4),
            lambda u, idx: (1 - a / 4 * fp((u + known_u[idx, None]) / 4))[..., None],
            C[:, None], cfg, indexed=True)
    else:
        u, _ = fixed_point(lambda u, idx: C[idx, None] + a * f((u + known_u[idx, None]) / 4),
                           C[:, None], cfg, indexed=True)
    u = u[:, 0]
    v_top = 4 * (u - ub) / dt - vb - vr - vl
    out = np.stack([u, v_top, w_top], axis=-1)
    return out[0] if single else out


def _neighbours(level_new, N):
    """Indices into level ``level_new - 1`` of each new diamond's left/right corners."""
    k = np.arange(N)
    if level_new % 2 == 1:
        return k, (k + 1) % N
    return (k - 1) % N, k


def simple_half_level(sys, lower: CornerGrid, upper: CornerGrid, params, cfg=SolverConfig(),
                      threads=1, update=None):
    """Compute level ``upper.level + 1`` from the two preceding levels."""
    new_level = upper.level + 1
    li, ri = _neighbours(new_level, params.N)
    update = update or simple_diamond_update
    try:
        vals = map_diamonds(lambda zl, zb, zr: update(sys, zl, zb, zr, params, cfg),
                            upper.values[li], lower.values, upper.values[ri], threads=threads)
    except SolverError as exc:
        raise DiamondSolveError.wrap(exc, new_level) from exc
    return CornerGrid(new_level, vals)


def simple_run(sys, params, init, steps, cfg=SolverConfig(), threads=1, update=None,
               callback=None):
    """Advance ``2 * steps`` half-levels from ``init = (level j, level j+1)``.

    Returns the final ``(lower, upper)`` pair; ``lower`` is at time
    ``(init level)/2 * dt + steps * dt``.  ``callback(lower, upper)`` is called
    after every half-level.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    lower, upper = init
    for _ in range(2 * steps):
        lower, upper = upper, simple_half_level(sys, lower, upper, params, cfg, threads, update)
        if callback is not None:
            callback(lower, upper)
    return lower, upper
