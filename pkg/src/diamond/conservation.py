"""Discrete multisymplectic conservation laws evaluated on tangent pairs.

A tangent pair ``(xi, eta)`` is two solutions of the scheme linearized about a
converged primal solution.  Wedge terms ``da ^ K db`` are evaluated as
``xi_a^T K eta_b - eta_a^T K xi_b``, and the one-point forms as
``omega(a) = xi_a^T K eta_a`` and ``kappa(a) = xi_a^T L eta_a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import ZigzagState, advance_reindex, transform_coeffs
from .nonlinear import SolverConfig, lu_solve
from .rk_scheme import (EdgeData, StageBlock, derivatives, linear_stage_operator,
                        solve_corner_extension, solve_stages, update_edges)
from .simple_scheme import CornerGrid, _neighbours, simple_diamond_update


@dataclass(frozen=True)
class FormEvaluator:
    K: np.ndarray
    L: np.ndarray

    def omega(self, xi, eta):
        return np.einsum("...i,ij,...j->...", xi, self.K, eta)

    def kappa(self, xi, eta):
        return np.einsum("...i,ij,...j->...", xi, self.L, eta)

    def wedge(self, M, xi_a, eta_a, xi_b, eta_b):
        """``(da ^ M db)`` on the pair."""
        return (np.einsum("...i,ij,...j->...", xi_a, M, eta_b)
                - np.einsum("...i,ij,...j->...", eta_a, M, xi_b))


@dataclass
class DiamondRecord:
    """Edge values of one row of diamonds: primal and both tangents.

    For the simple scheme each array is ``(N, 4, n)`` holding the corners
    (left, bottom, right, top).  For the r-stage scheme each is
    ``(N, 4, r, n)`` holding the edges (left, bottom, right, top).
    """
    level: int
    primal: np.ndarray
    xi: np.ndarray
    eta: np.ndarray


@dataclass
class TangentTrajectory:
    scheme: str
    records: list = field(default_factory=list)
    final: tuple | None = None  # (primal, xi, eta) after the last step


def _require_hessian(sys):
    if sys.hess_S is None:
        raise ValueError("tangent propagation needs hess_S")


def simple_tangent_update(sys, zl, zb, zr, zt, dl, db, dr, params):
    """Top-corner tangent from the linearized corner equation."""
    H = sys.hess_S((zl + zb + zr + zt) / 4)
    Kdt = sys.K / params.dt
    Ldx = sys.L / params.dx
    lhs = Kdt - H / 4
    rhs = db @ Kdt.T - (dr - dl) @ Ldx.T + np.einsum("bij,bj->bi", H, db + dl + dr) / 4
    return lu_solve(lhs, rhs)


def rk_tangent_stages(sys, tab, coeffs, edges: EdgeData, Z, d_left, d_bottom):
    """Stage tangents ``(dZ, dX, dT)`` by the linearized stage equations."""
    B, r, _, n = Z.shape
    m = r * r * n
    M = tab.A_inv
    s = M.sum(axis=1)
    Lin = linear_stage_operator(tab, coeffs)
    H = sys.hess_S(Z.reshape(B, r * r, n))
    J = np.broadcast_to(Lin, (B, m, m)).copy().reshape(B, r * r, n, r * r, n)
    diag = np.arange(r * r)
    J[:, diag, :, diag, :] -= np.moveaxis(H, 1, 0)
    J = J.reshape(B, m, m)
    dconst = (s[None, None, :, None] * (d_bottom @ coeffs.K_tilde.T)[:, :, None, :]
              + s[None, :, None, None] * (d_left @ coeffs.L_tilde.T)[:, None, :, :])
    dZ = lu_solve(J, dconst.reshape(B, m)).reshape(B, r, r, n)
    dX, dT = derivatives(tab, dZ, d_left, d_bottom)
    return dZ, dX, dT


def propagate_tangents(scheme, sys, params, init, xi0, eta0, levels, tab=None,
                       cfg=SolverConfig()):
    """Advance a primal solution and two tangents for ``levels`` half-steps.

    ``init`` is ``(lower, upper)`` CornerGrids for ``scheme="simple"`` and a
    ZigzagState for ``scheme="rk"``; ``xi0`` and ``eta0`` have the shape of
    the primal values (for the simple scheme, a pair of arrays).
    """
    _require_hessian(sys)
    traj = TangentTrajectory(scheme)
    if scheme == "simple":
        lower, upper = init
        xl, xu = (np.asarray(v, dtype=float) for v in xi0)
        el, eu = (np.asarray(v, dtype=float) for v in eta0)
        for _ in range(levels):
            new_level = upper.level + 1
            li, ri = _neighbours(new_level, params.N)
            zl, zb, zr = upper.values[li], lower.values, upper.values[ri]
            zt = simple_diamond_update(sys, zl, zb, zr, params, cfg)
            xt = simple_tangent_update(sys, zl, zb, zr, zt, xu[li], xl, xu[ri], params)
            et = simple_tangent_update(sys, zl, zb, zr, zt, eu[li], el, eu[ri], params)
            traj.records.append(DiamondRecord(
                new_level,
                np.stack([zl, zb, zr, zt], axis=1),
                np.stack([xu[li], xl, xu[ri], xt], axis=1),
                np.stack([eu[li], el, eu[ri], et], axis=1)))
            lower, upper = upper, CornerGrid(new_level, zt)
            xl, xu, el, eu = xu, xt, eu, et
        traj.final = ((lower, upper), (xl, xu), (el, eu))
        return traj
    if scheme != "rk":
        raise ValueError(f"unknown scheme {scheme!r}")
    if tab is None:
        raise ValueError("scheme='rk' needs a tableau")
    coeffs = transform_coeffs(sys, params)
    state = init
    tangents = [ZigzagState(state.level, np.asarray(xi0, dtype=float)),
                ZigzagState(state.level, np.asarray(eta0, dtype=float))]
    for _ in range(levels):
        edges = EdgeData(state.corner(), state.left(), state.bottom())
        stages = solve_stages(sys, tab, coeffs, edges, cfg)
        right, top = update_edges(stages, edges, tab)
        cr, ct = solve_corner_extension(tab, edges)
        out = []
        for tg in tangents:
            dedges = EdgeData(tg.corner(), tg.left(), tg.bottom())
            _, dX, dT = rk_tangent_stages(sys, tab, coeffs, edges, stages.Z,
                                          dedges.left, dedges.bottom)
            d_right, d_top = update_edges(StageBlock(None, dX, dT), dedges, tab)
            d_cr, d_ct = solve_corner_extension(tab, dedges)
            out.append((dedges, d_right, d_top, d_cr, d_ct))
        traj.records.append(DiamondRecord(
            state.level,
            np.stack([edges.left, edges.bottom, right, top], axis=1),
            *(np.stack([o[0].left, o[0].bottom, o[1], o[2]], axis=1) for o in out)))
        state = advance_reindex(right, top, params, state.level, cr, ct)
        tangents = [advance_reindex(o[1], o[2], params, state.level - 1, o[3], o[4])
                    for o in out]
    traj.final = (state, tangents[0], tangents[1])
    return traj


def simple_conservation_residual(xi, eta, dx, dt, forms: FormEvaluator, signed=False):
    """Corner-scheme conservation residual per diamond.

    ``xi`` and ``eta`` are ``(..., 4, n)`` corner tangents ordered
    (left, bottom, right, top).
    """
    xl, xb, xr, xt = (xi[..., k, :] for k in range(4))
    el, eb, er, et = (eta[..., k, :] for k in range(4))
    K, L = forms.K, forms.L
    w = forms.wedge
    res = ((w(K, xl + xt + xr, el + et + er, xt, et)
            - w(K, xl + xb + xr, el + eb + er, xb, eb)) / (4 * dt)
           + (w(L, xt + xr + xb, et + er + eb, xr, er)
              - w(L, xt + xl + xb, et + el + eb, xl, el)) / (4 * dx))
    return res if signed else np.abs(res)


def rk_conservation_residual(xi, eta, tab, dx, dt, forms: FormEvaluator, signed=False):
    """Edge-scheme conservation residual per diamond.

    ``xi`` and ``eta`` are ``(..., 4, r, n)`` edge tangents ordered
    (left, bottom, right, top).
    """
    om = forms.omega(xi, eta) @ tab.b  # (..., 4)
    ka = forms.kappa(xi, eta) @ tab.b
    res = ((om[..., 3] + om[..., 2] - om[..., 0] - om[..., 1]) / dt
           + (ka[..., 2] + ka[..., 1] - ka[..., 3] - ka[..., 0]) / dx)
    return res if signed else np.abs(res)


def trajectory_residuals(traj: TangentTrajectory, sys, params, tab=None):
    """``(level, residuals over diamonds)`` for every recorded row."""
    forms = FormEvaluator(sys.K, sys.L)
    out = []
    for rec in traj.records:
        if traj.scheme == "simple":
            res = simple_conservation_residual(rec.xi, rec.eta, params.dx, params.dt, forms)
        else:
            res = rk_conservation_residual(rec.xi, rec.eta, tab, params.dx, params.dt, forms)
        out.append((rec.level, res))
    return out
