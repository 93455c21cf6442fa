"""Deterministic data-parallel map over diamonds.

Diamonds are always split into chunks of a fixed size, independent of the
worker count, and each chunk is solved as one batch.  The arithmetic done
for any diamond is therefore identical for every ``threads`` setting.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .nonlinear import SolverError

CHUNK = 64


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("DIAMOND_THREADS", "1")))
    except ValueError:
        return 1


def map_diamonds(func, *arrays, threads=1, chunk=CHUNK):
    """Apply ``func`` to aligned chunks of ``arrays`` (split on axis 0).

    ``func`` returns an array or a tuple of arrays whose leading axis matches
    the chunk; results are concatenated in order.
    """
    N = len(arrays[0])
    bounds = [(s, min(s + chunk, N)) for s in range(0, N, chunk)]

    def run(bd):
        s, e = bd
        try:
            return func(*(a[s:e] for a in arrays))
        except SolverError as exc:
            if exc.failed is not None:
                exc.failed = np.asarray(exc.failed) + s
            raise

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(bd) for bd in bounds]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)
