"""Periodic diamond mesh: zig-zag layout, node coordinates and level advance.

Level ``j`` holds ``N`` diamonds whose bottom corners sit at
``x = a + (d + (j % 2)/2) dx``, ``t = j dt/2``.  Each diamond maps to the unit
square by ``x~ = x/dx + t/dt``, ``t~ = -x/dx + t/dt`` (relative to its bottom
corner), so the lower-left diamond edge is the square's left edge ``x~ = 0``
and the lower-right diamond edge is the square's bottom edge ``t~ = 0``.

A zig-zag stores ``2r + 1`` values per diamond::

    slot 0          bottom corner
    slots 1..r      left edge   (0, c_k)
    slots r+1..2r   bottom edge (c_k, 0)
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .tableau import gauss_tableau

EDGES = ("left", "bottom", "right", "top")


@dataclass(frozen=True)
class MeshParams:
    N: int
    dt: float
    a: float = -30.0
    b: float = 30.0
    r: int = 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not self.b > self.a:
            raise ValueError("domain must satisfy b > a")
        if self.dt == 0:
            raise ValueError("dt must be nonzero")
        if self.r < 1:
            raise ValueError("r must be at least 1")

    @classmethod
    def from_lambda(cls, N, lam, a=-30.0, b=30.0, r=1):
        return cls(N, lam * (b - a) / N, a, b, r)

    @property
    def dx(self) -> float:
        return (self.b - self.a) / self.N

    @property
    def lam(self) -> float:
        return self.dt / self.dx

    @cached_property
    def c(self) -> np.ndarray:
        return gauss_tableau(self.r).c

    def wrap(self, x):
        return self.a + np.mod(np.asarray(x) - self.a, self.b - self.a)


@dataclass
class ZigzagState:
    level: int
    values: np.ndarray  # (N, 2r+1, n)

    @property
    def r(self) -> int:
        return (self.values.shape[1] - 1) // 2

    def corner(self):
        return self.values[:, 0]

    def left(self):
        return self.values[:, 1:self.r + 1]

    def bottom(self):
        return self.values[:, self.r + 1:]


@dataclass(frozen=True)
class TransformedCoeffs:
    K_tilde: np.ndarray
    L_tilde: np.ndarray


def transform_coeffs(sys, params) -> TransformedCoeffs:
    """Coefficients of the PDE in unit-square coordinates."""
    return transform_coeffs_raw(sys.K, sys.L, params.dx, params.dt)


def transform_coeffs_raw(K, L, dx, dt) -> TransformedCoeffs:
    return TransformedCoeffs(K / dt - L / dx, K / dt + L / dx)


def corner_position(params, level, diamond):
    x = params.a + (diamond + (level % 2) / 2) * params.dx
    return x, level * params.dt / 2


def _square_point(edge, c):
    return {"left": (0.0, c), "bottom": (c, 0.0), "right": (1.0, c), "top": (c, 1.0)}[edge]


def from_square(params, x0, t0, xs, ts):
    """Physical coordinates of the unit-square point ``(xs, ts)``."""
    return x0 + params.dx / 2 * (xs - ts), t0 + params.dt / 2 * (xs + ts)


def square_coords(params, level, diamond, edge, stage, wrap=False):
    """Physical ``(x, t)`` of edge node ``stage`` (1-based) of one diamond."""
    if not 0 <= diamond < params.N:
        raise IndexError(f"diamond {diamond} out of range for N={params.N}")
    if edge not in EDGES:
        raise ValueError(f"edge must be one of {EDGES}")
    if not 1 <= stage <= params.r:
        raise IndexError(f"stage {stage} out of range for r={params.r}")
    if level < 0:
        raise IndexError("level must be nonnegative")
    x0, t0 = corner_position(params, level, diamond)
    x, t = from_square(params, x0, t0, *_square_point(edge, params.c[stage - 1]))
    return (float(params.wrap(x)) if wrap else x), t


def node_coords(params, level, wrap=True):
    """Coordinates ``(x, t)`` of every zig-zag slot, each of shape ``(N, 2r+1)``."""
    d = np.arange(params.N)
    x0, t0 = corner_position(params, level, d)
    c = params.c
    xs = np.concatenate([[0.0], np.zeros_like(c), c])
    ts = np.concatenate([[0.0], c, np.zeros_like(c)])
    x, t = from_square(params, x0[:, None], t0, xs[None, :], ts[None, :])
    t = np.broadcast_to(t, x.shape).copy()
    return (params.wrap(x) if wrap else x), t


def bind_edges(state: ZigzagState):
    """Split a zig-zag into per-diamond ``(corner, left, bottom)`` views."""
    return state.corner(), state.left(), state.bottom()


def advance_reindex(right, top, params, level, corner_right=None, corner_top=None):
    """Assemble the level ``level + 1`` zig-zag from one half-step's outputs.

    ``right`` and ``top`` are ``(N, r, n)``: the upper-right and upper-left
    diamond edges of level ``level``.  A new diamond's left edge is an old
    right edge and its bottom edge is the neighbouring old top edge; the
    neighbour lies to the right after even levels and to the left after odd
    ones.  The shared bottom corner is the mean of the two corner estimates
    (``NaN`` when no estimates are given).
    """
    right = np.asarray(right)
    top = np.asarray(top)
    N, r, n = right.shape
    if level % 2 == 0:
        left_src = np.arange(N)
        bottom_src = (np.arange(N) + 1) % N
    else:
        left_src = (np.arange(N) - 1) % N
        bottom_src = np.arange(N)
    values = np.empty((N, 2 * r + 1, n))
    values[:, 1:r + 1] = right[left_src]
    values[:, r + 1:] = top[bottom_src]
    if corner_right is None or corner_top is None:
        values[:, 0] = np.nan
    else:
        values[:, 0] = 0.5 * (np.asarray(corner_right)[left_src] + np.asarray(corner_top)[bottom_src])
    return ZigzagState(level + 1, values)
