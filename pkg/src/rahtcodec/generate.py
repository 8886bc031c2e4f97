"""Seeded synthetic voxel clouds for fixtures and rate sweeps.

Shapes place voxels, textures paint them.  Everything is driven by a
PCG64 generator seeded from the arguments, so the same call always
produces the same cloud down to the last voxel.
"""

import numpy as np

from .pointcloud import VoxelizedPointCloud, make_cloud

SHAPES = ("sphere", "box")
TEXTURES = ("gradient", "checker", "noise", "solid")


def _dedupe_exact(batches, n_points: int, depth: int) -> np.ndarray:
    """First n_points distinct voxels, in generation order."""
    collected = []
    for batch in batches:
        collected.append(batch)
        pool = np.concatenate(collected) if len(collected) > 1 else collected[0]
        key = (pool[:, 0] << 42) | (pool[:, 1] << 21) | pool[:, 2]
        _, first = np.unique(key, return_index=True)
        if len(first) >= n_points:
            first.sort()
            return pool[first[:n_points]]
    raise ValueError(f"shape cannot supply {n_points} distinct voxels at depth {depth}")


def _sphere_batches(rng, depth: int, n_points: int, max_batches: int = 64):
    grid = 1 << depth
    center = (grid - 1) / 2.0
    radius = 0.38 * grid
    size = max(65536, n_points)
    for _ in range(max_batches):
        d = rng.normal(size=(size, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = radius + rng.uniform(-1.0, 1.0, size=(size, 1))
        p = np.floor(center + d * r + 0.5).astype(np.int64)
        yield np.clip(p, 0, grid - 1)


def _box_batches(rng, depth: int, n_points: int, max_batches: int = 64):
    grid = 1 << depth
    lo, hi = grid // 4, 3 * grid // 4
    size = max(65536, n_points)
    for _ in range(max_batches):
        yield rng.integers(lo, hi, size=(size, 3), dtype=np.int64)


def _paint_gradient(positions, depth, rng):
    grid = float((1 << depth) - 1) if depth > 0 else 1.0
    t = positions / max(grid, 1.0)
    r = 255.0 * t[:, 0]
    g = 255.0 * t[:, 1]
    b = 255.0 * (t[:, 0] + t[:, 1] + t[:, 2]) / 3.0
    return np.floor(np.stack([r, g, b], axis=1) + 0.5)


def _paint_checker(positions, depth, rng):
    period = max(1, (1 << depth) // 16)
    cell = (positions // period).sum(axis=1) % 2
    hi = np.array([230.0, 80.0, 40.0])
    lo = np.array([25.0, 160.0, 210.0])
    return np.where(cell[:, None] == 1, hi, lo)


def _paint_noise(positions, depth, rng):
    return rng.integers(0, 256, size=(len(positions), 3)).astype(np.float64)


def _paint_solid(positions, depth, rng):
    return np.broadcast_to(np.array([180.0, 96.0, 32.0]), (len(positions), 3)).copy()


_SHAPE_FNS = {"sphere": _sphere_batches, "box": _box_batches}
_TEXTURE_FNS = {"gradient": _paint_gradient, "checker": _paint_checker,
                "noise": _paint_noise, "solid": _paint_solid}


def synth_cloud(shape: str = "sphere", texture: str = "gradient",
                depth: int = 8, n_points: int = 50000,
                seed: int = 0) -> VoxelizedPointCloud:
    """Deterministic voxel cloud: ``shape`` in {sphere, box}, ``texture``
    in {gradient, checker, noise, solid}."""
    if shape not in _SHAPE_FNS:
        raise ValueError(f"unknown shape {shape!r}")
    if texture not in _TEXTURE_FNS:
        raise ValueError(f"unknown texture {texture!r}")
    if n_points <= 0:
        raise ValueError("n_points must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([seed, SHAPES.index(shape),
                                                        TEXTURES.index(texture), depth]))
    positions = _dedupe_exact(_SHAPE_FNS[shape](rng, depth, n_points), n_points, depth)
    attributes = _TEXTURE_FNS[texture](positions, depth, rng)
    return make_cloud(positions, attributes, depth=depth)
