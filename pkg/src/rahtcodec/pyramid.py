"""Multi-scale sum pyramid over a voxelized cloud.

Level 0 is the cloud itself with unit weights.  Level m+1 sums attribute
mass A and point count w over each occupied 2x2x2 voxel of level m.  In
Morton order the children of a parent are consecutive and share
``code >> 3``, so grouping is a run-boundary scan, never a hash.

Normalized attributes g = A / sqrt(w) at any level equal the DC terms the
Haar cascade produces one level below; averaged attributes a = A / w feed
the spatial predictor.
"""

from dataclasses import dataclass

import numpy as np

from .pointcloud import VoxelizedPointCloud


@dataclass
class ScaleLevel:
    """One pyramid level.

    positions : (M, 3) int64 voxel coordinates at this scale, Morton-sorted
    codes : (M,) uint64 Morton codes of ``positions``
    A : (M, C) float64 summed attributes
    w : (M,) int64 point counts (always >= 1)
    parent_index : (M,) int64 index into level ``scale + 1``, or None at the top
    child_range : (M, 2) int64 [start, end) spans into level ``scale - 1``,
        or None at level 0
    """

    scale: int
    positions: np.ndarray
    codes: np.ndarray
    A: np.ndarray
    w: np.ndarray
    parent_index: np.ndarray | None = None
    child_range: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.positions)

    def averages(self) -> np.ndarray:
        """Per-node averaged attributes a = A / w."""
        return self.A / self.w[:, None]

    def normalized(self) -> np.ndarray:
        """Per-node normalized attributes g = A / sqrt(w)."""
        return self.A / np.sqrt(self.w.astype(np.float64))[:, None]


@dataclass
class Pyramid:
    depth: int
    levels: list  # [ScaleLevel], index = scale, length scales + 1


def build_pyramid(cloud: VoxelizedPointCloud, scales: int | None = None) -> Pyramid:
    """Build ``scales`` levels of 2x2x2 sum pooling above the cloud.

    Defaults to ``cloud.depth`` levels, in which case the top level is a
    single node holding total mass.  Attribute sums accumulate in float64,
    counts in int64.
    """
    if scales is None:
        scales = cloud.depth
    if not 1 <= scales <= cloud.depth:
        raise ValueError(f"scales must be in [1, {cloud.depth}], got {scales}")

    base = ScaleLevel(
        scale=0,
        positions=cloud.positions,
        codes=cloud.codes,
        A=cloud.attributes.astype(np.float64, copy=True),
        w=np.ones(cloud.n_points, dtype=np.int64),
    )
    levels = [base]
    for m in range(scales):
        child = levels[m]
        parent_codes = child.codes >> np.uint64(3)
        starts = np.flatnonzero(np.diff(parent_codes.view(np.int64), prepend=-1))
        n_par = len(starts)
        ends = np.append(starts[1:], len(parent_codes))

        A = np.add.reduceat(child.A, starts, axis=0)
        w = np.add.reduceat(child.w, starts)
        child.parent_index = np.repeat(np.arange(n_par, dtype=np.int64), ends - starts)
        levels.append(ScaleLevel(
            scale=m + 1,
            positions=child.positions[starts] >> 1,
            codes=parent_codes[starts],
            A=A,
            w=w.astype(np.int64),
            child_range=np.stack([starts, ends], axis=1).astype(np.int64),
        ))
    return Pyramid(depth=cloud.depth, levels=levels)


def children_of(parent_level: ScaleLevel, child_level: ScaleLevel, parent_node: int):
    """Indices and 2x2x2 offsets of one parent's children.

    Returns ``(indices, offsets)`` where ``indices`` selects rows of
    ``child_level`` and ``offsets`` is the matching (k, 3) array of
    child-position low bits.
    """
    if parent_level.child_range is None:
        raise ValueError("level has no child span (scale 0)")
    if not 0 <= parent_node < parent_level.n_nodes:
        raise ValueError(f"parent index {parent_node} out of range")
    if child_level.scale != parent_level.scale - 1:
        raise ValueError("child_level is not one scale below parent_level")
    start, end = parent_level.child_range[parent_node]
    idx = np.arange(start, end, dtype=np.int64)
    return idx, (child_level.positions[start:end] & 1)
