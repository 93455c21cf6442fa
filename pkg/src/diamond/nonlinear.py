"""Small dense kernels shared by the diamond solvers.

Every per-diamond system is tiny (at most a few dozen unknowns), so dense
LAPACK-backed factorizations are used throughout.  The Newton and fixed-point
drivers accept batched arguments: ``x`` may have shape ``(..., m)`` and each
leading index is an independent system that stops iterating as soon as its
own residual meets the tolerance.  A result therefore never depends on which
other systems it was batched with.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class SolverError(RuntimeError):
    """Raised when an iterative solve fails to converge."""

    def __init__(self, message, iterations=None, residual=None, failed=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
        self.failed = failed  # batch indices of the systems that did not converge


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    method: str = "auto"  # newton | fixed_point | auto
    tol: float = 1e-12
    max_iter: int = 50
    damping: float | None = None

    def __post_init__(self):
        if self.method not in ("newton", "fixed_point", "auto"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.damping is not None and not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    converged: bool


def lu_solve(M, rhs):
    """Solve ``M x = rhs`` by LU with partial pivoting (batched over leading axes)."""
    M = np.asarray(M, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    try:
        if rhs.ndim == M.ndim - 1:
            return np.linalg.solve(M, rhs[..., None])[..., 0]
        return np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc


def det_complex(M):
    """Determinant of a (complex) square matrix, or a stack of them, via LU."""
    d = np.linalg.det(np.asarray(M, dtype=complex))
    return complex(d) if np.ndim(d) == 0 else d


def min_singular_value(M):
    M = np.asarray(M, dtype=float)
    return float(np.linalg.svd(M, compute_uv=False).min())


def inf_norm(M):
    return float(np.abs(np.asarray(M, dtype=float)).sum(axis=-1).max())


def inf_norm_inverse(M):
    """``||M^{-1}||_inf`` from the explicit inverse."""
    try:
        Minv = np.linalg.inv(np.asarray(M, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    return inf_norm(Minv)


_STALL = 64 * np.finfo(float).eps


def inf_norm_rows(J):
    """Infinity norm of each matrix in a ``(k, m, m)`` stack."""
    return np.abs(J).sum(axis=-1).max(axis=-1)


def _resnorm(F):
    return np.abs(F).max(axis=-1)


def _batched(func, single, indexed):
    # present a (k, m) interface to the drivers regardless of caller rank
    if single:
        if indexed:
            return lambda y, idx: np.asarray(func(y[0], None), dtype=float)[None]
        return lambda y, idx: np.asarray(func(y[0]), dtype=float)[None]
    if indexed:
        return lambda y, idx: np.asarray(func(y, idx), dtype=float)
    return lambda y, idx: np.asarray(func(y), dtype=float)


def newton(F: Callable, J: Callable, x0, cfg: SolverConfig = SolverConfig(), indexed=False):
    """Newton's method with step halving.

    ``x0`` is either one system ``(m,)`` or a batch ``(B, m)``; ``F`` and ``J``
    receive arrays of the same rank (``(k, m)`` for a batch, with ``k`` the
    number of still-active systems) and return residuals and Jacobians
    ``(k, m, m)``.  When a full step does not reduce a system's residual its
    step is halved, up to 8 times.  A system whose residual can no longer be
    reduced and already sits at rounding level of ``|J| |x|`` also counts as
    converged; this only matters for badly conditioned systems.  With ``indexed=True`` the callables also
    receive the indices of the active rows within the original batch.

    Returns ``(x, report)``; raises :class:`SolverError` on failure.
    """
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    x = np.atleast_2d(x0).copy()
    f2, j2 = _batched(F, single, indexed), _batched(J, single, indexed)
    allrows = np.arange(len(x))
    fx = f2(x, allrows)
    res = _resnorm(fx)
    base = 1.0 if cfg.damping is None else cfg.damping
    iters = 0
    stalled = np.zeros(len(x), dtype=bool)
    active = np.nonzero(res > cfg.tol)[0]
    while active.size:
        if iters >= cfg.max_iter:
            raise SolverError(
                f"Newton did not converge in {cfg.max_iter} iterations "
                f"(residual {res.max():.3e})", iters, float(res.max()), active)
        iters += 1
        xa, ra = x[active], res[active]
        Ja = j2(xa, active)
        dx = lu_solve(Ja, -fx[active])
        floor = _STALL * inf_norm_rows(Ja) * np.maximum(1.0, np.abs(xa).max(axis=1))
        step = np.full(active.size, base)
        trial = xa + step[:, None] * dx
        ft = f2(trial, active)
        rt = _resnorm(ft)
        for _ in range(8):
            worse = ~(rt < ra)
            if not worse.any():
                break
            step[worse] /= 2
            trial[worse] = xa[worse] + step[worse, None] * dx[worse]
            ft[worse] = f2(trial[worse], active[worse])
            rt[worse] = _resnorm(ft[worse])
        # no decrease left and residual at rounding level of J x: stop there
        stuck = ~(rt < ra) & (ra <= floor)
        trial[stuck], ft[stuck], rt[stuck] = xa[stuck], fx[active[stuck]], ra[stuck]
        stalled[active[stuck]] = True
        x[active], fx[active], res[active] = trial, ft, rt
        active = np.nonzero((res > cfg.tol) & ~stalled)[0]
    report = SolveReport(iters, float(res.max()), True)
    return (x[0] if single else x), report


def fixed_point(G: Callable, x0, cfg: SolverConfig = SolverConfig(), indexed=False):
    """Iterate ``x <- G(x)`` until ``||x - G(x)||_inf <= tol`` per system.

    Same batching convention as :func:`newton`.  Residuals growing for five
    consecutive iterations raise :class:`SolverError` early.
    """
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    x = np.atleast_2d(x0).copy()
    g2 = _batched(G, single, indexed)
    gx = g2(x, np.arange(len(x)))
    res = _resnorm(gx - x)
    theta = 1.0 if cfg.damping is None else cfg.damping
    iters = growth = 0
    active = np.nonzero(res > cfg.tol)[0]
    while active.size:
        if iters >= cfg.max_iter:
            raise SolverError(
                f"fixed-point iteration did not converge in {cfg.max_iter} "
                f"iterations (residual {res.max():.3e})", iters, float(res.max()), active)
        iters += 1
        xa = x[active] + theta * (gx[active] - x[active])
        ga = g2(xa, active)
        ra = _resnorm(ga - xa)
        growth = growth + 1 if np.any(ra > res[active]) else 0
        if growth >= 5:
            raise SolverError("fixed-point iteration diverges", iters, float(ra.max()), active)
        x[active], gx[active], res[active] = xa, ga, ra
        active = np.nonzero(res > cfg.tol)[0]
    return (x[0] if single else x), SolveReport(iters, float(res.max()), True)
