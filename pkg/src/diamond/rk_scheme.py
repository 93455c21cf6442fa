"""The r-stage diamond scheme.

Inside the unit square of one diamond the stage values ``Z[i, j]`` (``i`` the
x~-stage, ``j`` the t~-stage) and their derivative approximations satisfy

    Z[i, j] = zl[j] + sum_k A[i, k] X[k, j]
    Z[i, j] = zb[i] + sum_k A[j, k] T[i, k]
    grad S(Z[i, j]) = Kt T[i, j] + Lt X[i, j]

and the upper edges follow from

    zr[j] = zl[j] + sum_k b[k] X[k, j],    zt[i] = zb[i] + sum_k b[k] T[i, k].

``X`` and ``T`` are eliminated with ``M = A^{-1}``, leaving ``r^2 n``
nonlinear equations in ``Z``.  All routines take a leading batch axis over
diamonds.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mesh import ZigzagState, advance_reindex, node_coords, transform_coeffs
from .nonlinear import SolverConfig, SolverError, fixed_point, lu_solve, newton
from .parallel import map_diamonds
from .simple_scheme import DiamondSolveError, _fd_jacobian
from .tableau import build_B, gauss_tableau
from .nonlinear import inf_norm_inverse


@dataclass
class StageBlock:
    Z: np.ndarray  # (B, r, r, n)
    X: np.ndarray
    T: np.ndarray


@dataclass
class EdgeData:
    corner: np.ndarray  # (B, n)
    left: np.ndarray  # (B, r, n), left[j] at square point (0, c_j)
    bottom: np.ndarray  # (B, r, n), bottom[i] at square point (c_i, 0)


def _as_batch(edges: EdgeData):
    corner = np.asarray(edges.corner, dtype=float)
    left = np.asarray(edges.left, dtype=float)
    bottom = np.asarray(edges.bottom, dtype=float)
    single = left.ndim == 2
    if single:
        corner, left, bottom = corner[None], left[None], bottom[None]
    return EdgeData(corner, left, bottom), single


def derivatives(tab, Z, left, bottom):
    """``X`` and ``T`` implied by stage values ``Z`` and the known edges."""
    M = tab.A_inv
    s = M.sum(axis=1)
    X = np.einsum("ik,bkjn->bijn", M, Z) - s[None, :, None, None] * left[:, None, :, :]
    T = np.einsum("jk,bikn->bijn", M, Z) - s[None, None, :, None] * bottom[:, :, None, :]
    return X, T


def linear_stage_operator(tab, coeffs):
    """Matrix of ``Z -> Kt T + Lt X`` (homogeneous part), ``(r^2 n, r^2 n)``.

    Flattening is ``(i, j, component)`` row-major.
    """
    M = tab.A_inv
    I = np.eye(tab.r)
    return np.kron(np.kron(I, M), coeffs.K_tilde) + np.kron(np.kron(M, I), coeffs.L_tilde)


def stage_residual(sys, tab, coeffs, edges: EdgeData, stages: StageBlock):
    """Residuals of the three stage equations, assembled directly.

    Returns the max-norm of each equation family per diamond, ``(B, 3)``.
    """
    A = tab.A
    Z, X, T = stages.Z, stages.X, stages.T
    r1 = Z - edges.left[:, None, :, :] - np.einsum("ik,bkjn->bijn", A, X)
    r2 = Z - edges.bottom[:, :, None, :] - np.einsum("jk,bikn->bijn", A, T)
    r3 = sys.grad_S(Z) - T @ coeffs.K_tilde.T - X @ coeffs.L_tilde.T
    return np.stack([np.abs(v).reshape(len(Z), -1).max(axis=1) for v in (r1, r2, r3)], axis=1)


def solve_stages(sys, tab, coeffs, edges: EdgeData, cfg=SolverConfig(), guess=None):
    """Solve the stage equations of a batch of diamonds."""
    edges, single = _as_batch(edges)
    B = len(edges.left)
    r, n = tab.r, edges.left.shape[-1]
    m = r * r * n
    M = tab.A_inv
    s = M.sum(axis=1)
    Kt, Lt = coeffs.K_tilde, coeffs.L_tilde
    Lin = linear_stage_operator(tab, coeffs)
    const = (s[None, None, :, None] * (edges.bottom @ Kt.T)[:, :, None, :]
             + s[None, :, None, None] * (edges.left @ Lt.T)[:, None, :, :]).reshape(B, m)
    diag = np.arange(r * r)

    def F(zf, idx):
        Z = zf.reshape(-1, r, r, n)
        return zf @ Lin.T - const[idx] - sys.grad_S(Z).reshape(len(zf), m)

    def J(zf, idx):
        if sys.hess_S is None:
            return _fd_jacobian(lambda y: F(y, idx), zf)
        H = sys.hess_S(zf.reshape(-1, r * r, n))  # (k, r*r, n, n)
        Jb = np.broadcast_to(Lin, (len(zf), m, m)).copy().reshape(len(zf), r * r, n, r * r, n)
        Jb[:, diag, :, diag, :] -= np.moveaxis(H, 1, 0)
        return Jb.reshape(len(zf), m, m)

    if guess is None:
        guess = (edges.left[:, None, :, :] + edges.bottom[:, :, None, :]
                 - edges.corner[:, None, None, :])
        if not np.all(np.isfinite(guess)):
            guess = 0.5 * (edges.left[:, None, :, :] + edges.bottom[:, :, None, :])
    z0 = np.asarray(guess, dtype=float).reshape(B, m)

    method = cfg.method
    if method == "auto":
        method = "newton" if sys.hess_S is not None else "fixed_point"
    if method == "newton":
        zf, _ = newton(F, J, z0, cfg, indexed=True)
    else:
        J0 = J(z0, np.arange(B))
        zf, _ = fixed_point(lambda z, idx: z - lu_solve(J0[idx], F(z, idx)), z0, cfg,
                            indexed=True)
    Z = zf.reshape(B, r, r, n)
    X, T = derivatives(tab, Z, edges.left, edges.bottom)
    out = StageBlock(Z, X, T)
    if single:
        out = StageBlock(Z[0], X[0], T[0])
    return out


def update_edges(stages: StageBlock, edges: EdgeData, tab):
    """Right and top edges ``(zr, zt)`` from solved stages."""
    X, T = np.asarray(stages.X), np.asarray(stages.T)
    right = np.asarray(edges.left) + np.einsum("k,...kjn->...jn", tab.b, X)
    top = np.asarray(edges.bottom) + np.einsum("k,...ikn->...in", tab.b, T)
    return right, top


def solve_corner_extension(tab, edges: EdgeData, stages: StageBlock | None = None):
    """Corner values at the square points ``(1, 0)`` and ``(0, 1)``.

    The x~-stage equation extended to the bottom edge gives
    ``X[:, 0] = M (zb - corner)``; its update lands on the right corner.  The
    t~-stage equation extended to the left edge gives the left corner.  Both
    depend only on edge data, so ``stages`` is accepted but unused.
    """
    w = tab.end_weights
    corner = np.asarray(edges.corner)
    right = corner + np.einsum("k,...kn->...n", w, np.asarray(edges.bottom) - corner[..., None, :])
    top = corner + np.einsum("k,...kn->...n", w, np.asarray(edges.left) - corner[..., None, :])
    return right, top


def reduced_wave_b(tab, params, edges: EdgeData):
    """Constant term of ``B u = b + dt^2 f(u)`` for the wave family, ``(B, r*r)``."""
    edges, _ = _as_batch(edges)
    M = tab.A_inv
    s = M.sum(axis=1)
    lam2 = params.lam ** 2
    dt, dx = params.dt, params.dx
    ub, vb, wb = (edges.bottom[..., k] for k in range(3))  # (B, r) indexed i
    ul, vl, wl = (edges.left[..., k] for k in range(3))  # indexed j
    sig_t = ub[:, :, None] * s[None, None, :]  # [i, j] = s_j ub_i
    sig_x = s[None, :, None] * ul[:, None, :]  # [i, j] = s_i ul_j
    Dt = lambda U: U @ M.T
    Dx = lambda U: np.einsum("ik,bkj->bij", M, U)
    c = (-(1 - lam2) * (Dt(sig_t) + Dx(sig_x)) - (1 + lam2) * (Dt(sig_x) + Dx(sig_t))
         - dt * s[None, None, :] * vb[:, :, None] - dt * s[None, :, None] * vl[:, None, :]
         - dt**2 / dx * s[None, None, :] * wb[:, :, None]
         + dt**2 / dx * s[None, :, None] * wl[:, None, :])
    return -c.reshape(len(c), -1)


def reduced_wave_solve(sys, tab, params, edges: EdgeData, cfg=SolverConfig(), history=None):
    """Stage values of the wave family via the contraction ``u <- B^{-1}(b + dt^2 f(u))``.

    ``history``, when a list, receives the max-norm change of each iterate.
    """
    edges, single = _as_batch(edges)
    r = tab.r
    Bm = build_B(tab, params.lam).B
    Binv = np.linalg.inv(Bm)
    if sys.lipschitz_const:
        bound = 1.0 / (sys.lipschitz_const * inf_norm_inverse(Bm))
        if params.dt**2 >= bound:
            warnings.warn(f"dt={params.dt} exceeds the contraction bound "
                          f"{np.sqrt(bound):.4g}; iteration may not converge", RuntimeWarning)
    b = reduced_wave_b(tab, params, edges)
    dt2 = params.dt**2

    def G(u, idx):
        return (b[idx] + dt2 * sys.f(u)) @ Binv.T

    u0 = b @ Binv.T
    if history is not None:
        def G_logged(u, idx):
            g = G(u, idx)
            history.append(float(np.abs(g - u).max()))
            return g
        u, _ = fixed_point(G_logged, u0, cfg, indexed=True)
    else:
        u, _ = fixed_point(G, u0, cfg, indexed=True)

    M = tab.A_inv
    s = M.sum(axis=1)
    U = u.reshape(-1, r, r)
    dlt_t = U @ M.T - edges.bottom[..., 0][:, :, None] * s[None, None, :]
    dlt_x = np.einsum("ik,bkj->bij", M, U) - s[None, :, None] * edges.left[..., 0][:, None, :]
    V = (dlt_t + dlt_x) / params.dt
    W = (dlt_x - dlt_t) / params.dx
    Z = np.stack([U, V, W], axis=-1)
    X, T = derivatives(tab, Z, edges.left, edges.bottom)
    if single:
        return StageBlock(Z[0], X[0], T[0])
    return StageBlock(Z, X, T)


def diamond_update(sys, tab, coeffs, edges: EdgeData, cfg=SolverConfig(), corners=True):
    """Full per-diamond step: stages, upper edges and (optionally) corners."""
    stages = solve_stages(sys, tab, coeffs, edges, cfg)
    right, top = update_edges(stages, edges, tab)
    if corners:
        cr, ct = solve_corner_extension(tab, edges)
    else:
        cr = ct = np.full(np.shape(edges.corner), np.nan)
    return right, top, cr, ct


def rk_half_step(sys, tab, params, state: ZigzagState, cfg=SolverConfig(), threads=1,
                 corners=True):
    """Advance a zig-zag by one half-step (one row of diamonds)."""
    coeffs = transform_coeffs(sys, params)

    def work(corner, left, bottom):
        return diamond_update(sys, tab, coeffs, EdgeData(corner, left, bottom), cfg, corners)

    try:
        right, top, cr, ct = map_diamonds(work, state.corner(), state.left(), state.bottom(),
                                          threads=threads)
    except SolverError as exc:
        raise DiamondSolveError.wrap(exc, state.level) from exc
    if corners:
        return advance_reindex(right, top, params, state.level, cr, ct)
    return advance_reindex(right, top, params, state.level)


def rk_run(sys, tab, params, state: ZigzagState, steps, cfg=SolverConfig(), threads=1,
           corners=True, callback=None):
    """``2 * steps`` half-steps; ``callback(state)`` after each one."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    for _ in range(2 * steps):
        state = rk_half_step(sys, tab, params, state, cfg, threads, corners)
        if callback is not None:
            callback(state)
    return state


def rk_init(z0, z0_t, tab, params, mode="euler", z_exact=None, level=0):
    """Initial zig-zag at ``level`` (corners included).

    ``mode="euler"``: ``z(x, t) = z0(x) + t z0_t(x)`` at every node.
    ``mode="exact"``: ``z_exact(x, t)`` at every node.
    Node ``x`` is wrapped into ``[a, b)``.
    """
    x, t = node_coords(params, level, wrap=True)
    shape = x.shape
    xf, tf = x.ravel(), t.ravel()
    if mode == "exact":
        if z_exact is None:
            raise ValueError("mode='exact' needs z_exact")
        vals = np.asarray(z_exact(xf, tf), dtype=float)
    elif mode == "euler":
        vals = np.asarray(z0(xf), dtype=float) + tf[:, None] * np.asarray(z0_t(xf), dtype=float)
    else:
        raise ValueError(f"unknown init mode {mode!r}")
    return ZigzagState(level, vals.reshape(shape + (-1,)))


def map_simple_to_r1(z_left, z_bottom, z_right, z_top):
    """Edge midpoints of a simple-scheme diamond: ``(left, bottom, right, top)``."""
    zl, zb, zr, zt = (np.asarray(v, dtype=float) for v in (z_left, z_bottom, z_right, z_top))
    return (zb + zl) / 2, (zb + zr) / 2, (zr + zt) / 2, (zl + zt) / 2


def r1_residuals(sys, coeffs, left, bottom, right, top):
    """Residuals of the eliminated one-stage equations, max-norm per diamond.

    Returns ``(dynamics, consistency)``: the transformed discrete PDE at the
    edge average, and ``top - right + bottom - left``.
    """
    center = (top + bottom + right + left) / 4
    dyn = (top - bottom) @ coeffs.K_tilde.T + (right - left) @ coeffs.L_tilde.T - sys.grad_S(center)
    con = top - right + bottom - left
    return np.abs(dyn).max(axis=-1), np.abs(con).max(axis=-1)


def default_tableau(params):
    return gauss_tableau(params.r)
