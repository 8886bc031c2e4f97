"""Shared helpers for the test suite.

Most tests build small random voxel clouds; the factory here keeps the
dedup/sort bookkeeping in one place so individual tests stay readable.
"""

import numpy as np

from rahtcodec.pointcloud import make_cloud


def random_cloud(rng, n_points, depth, channels=3, peak=255.0):
    """Random occupied voxels with uniform random attributes.

    Draws more candidates than needed, deduplicates exact voxel
    collisions, and returns a canonical cloud with at most ``n_points``
    points (collisions can only shrink the set, never grow it).
    """
    grid = 1 << depth
    pos = rng.integers(0, grid, size=(n_points * 2, 3), dtype=np.int64)
    pos = np.unique(pos, axis=0)[:n_points]
    attrs = rng.uniform(0.0, peak, size=(len(pos), channels))
    return make_cloud(pos, attrs, depth=depth)


def gradient_cloud(rng, n_points, depth, channels=3):
    """Random geometry with a smooth linear attribute ramp (predictable)."""
    grid = 1 << depth
    pos = rng.integers(0, grid, size=(n_points * 2, 3), dtype=np.int64)
    pos = np.unique(pos, axis=0)[:n_points]
    t = pos.astype(np.float64) / max(grid - 1, 1)
    cols = [t[:, 0], t[:, 1], (t[:, 0] + t[:, 1] + t[:, 2]) / 3.0]
    attrs = np.stack(cols[:channels], axis=1) * 255.0
    return make_cloud(pos, attrs, depth=depth)
