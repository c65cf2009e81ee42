"""Reproducible per-path random streams.

Each path index gets its own counter-based Philox stream keyed by the
master seed, so a path's draws never depend on how paths are batched or
which worker produced them.
"""

from __future__ import annotations

import numpy as np


def _master_key(master_seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(master_seed)).generate_state(2, np.uint64)


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    """Generator for ``(master_seed, path_index)``; the index occupies the top counter word."""
    key = _master_key(master_seed)
    counter = np.array([0, 0, 0, int(path_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def path_normals(master_seed: int, indices, width: int, antithetic: bool = False) -> np.ndarray:
    """Standard normals of shape ``(len(indices), width)``, one row per path index.

    With ``antithetic`` the pair ``(2k, 2k+1)`` shares stream ``k`` with
    opposite signs.
    """
    key = _master_key(master_seed)
    idx = np.asarray(indices, dtype=np.int64)
    out = np.empty((idx.size, width))
    counter = np.zeros(4, dtype=np.uint64)
    for row, i in enumerate(idx):
        stream, sign = (i // 2, -1.0 if i % 2 else 1.0) if antithetic else (i, 1.0)
        counter[3] = stream
        g = np.random.Generator(np.random.Philox(key=key, counter=counter))
        out[row] = g.standard_normal(width)
        if sign < 0:
            out[row] *= -1.0
    return out
