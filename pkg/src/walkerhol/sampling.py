"""Deterministic point sampling helpers (probe grids, quasi-random targets)."""

from __future__ import annotations

import numpy as np
from scipy.stats import qmc


def halton_points(box, count, seed=0):
    """`count` scrambled Halton points inside `box` (array of (lo, hi) rows)."""
    box = np.asarray(box, dtype=float)
    sampler = qmc.Halton(d=box.shape[0], scramble=True, seed=int(seed))
    u = sampler.random(count)
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


def cell_grid(box, per_axis, cap=1 << 18):
    """Regular grid over `box`, chunked so no chunk exceeds `cap` points.

    Yields arrays of shape (chunk, dim).
    """
    box = np.asarray(box, dtype=float)
    dim = box.shape[0]
    axes = [np.linspace(box[i, 0], box[i, 1], per_axis) for i in range(dim)]
    total = per_axis ** dim
    chunk_rows = max(1, cap // max(1, per_axis ** (dim - 1)))
    first = axes[0]
    rest = axes[1:]
    if not rest:
        yield first[:, None]
        return
    mesh_rest = np.meshgrid(*rest, indexing="ij")
    flat_rest = np.stack([m.ravel() for m in mesh_rest], axis=-1)
    for start in range(0, per_axis, chunk_rows):
        block_first = first[start : start + chunk_rows]
        out = np.empty((block_first.size * flat_rest.shape[0], dim))
        out[:, 0] = np.repeat(block_first, flat_rest.shape[0])
        out[:, 1:] = np.tile(flat_rest, (block_first.size, 1))
        yield out
    del total


def expand_box(box, dim):
    """Broadcast a single (lo, hi) pair to all `dim` coordinates if needed."""
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (dim, 1))
    if box.shape != (dim, 2):
        raise ValueError(f"box must have shape ({dim}, 2)")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("box upper bounds must exceed lower bounds")
    return box
