"""Morton (z-order) codes for nonnegative integer voxel coordinates.

Coordinate bit k of (x, y, z) lands in code bits 3k, 3k+1, 3k+2, so x is
the least significant axis of each triple:

    code = ... z1 y1 x1 z0 y0 x0

Two consequences the rest of the codec relies on:

  * sorting by code places the eight children of a voxel consecutively,
    ordered (0,0,0), (1,0,0), (0,1,0), (1,1,0), (0,0,1), ...;
  * children of a common parent share ``code >> 3``, so one-level
    coarsening is a shift, never a hash.

Depth is capped at 21 so codes fit in 63 bits.
"""

import numpy as np

MAX_DEPTH = 21


def morton_encode(positions: np.ndarray, depth: int) -> np.ndarray:
    """Interleave (N, 3) integer coordinates into (N,) uint64 codes.

    Coordinates must lie in [0, 2**depth).
    """
    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in [1, {MAX_DEPTH}], got {depth}")
    pos = np.asarray(positions)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError(f"positions must have shape (N, 3), got {pos.shape}")
    if pos.size and (pos.min() < 0 or pos.max() >= (1 << depth)):
        raise ValueError(f"coordinates out of range for depth {depth}")
    x = pos[:, 0].astype(np.uint64)
    y = pos[:, 1].astype(np.uint64)
    z = pos[:, 2].astype(np.uint64)
    codes = np.zeros(len(pos), dtype=np.uint64)
    one = np.uint64(1)
    for k in range(depth):
        codes |= ((x >> np.uint64(k)) & one) << np.uint64(3 * k)
        codes |= ((y >> np.uint64(k)) & one) << np.uint64(3 * k + 1)
        codes |= ((z >> np.uint64(k)) & one) << np.uint64(3 * k + 2)
    return codes


def morton_decode(codes: np.ndarray, depth: int) -> np.ndarray:
    """Inverse of :func:`morton_encode`; returns (N, 3) int64 coordinates."""
    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in [1, {MAX_DEPTH}], got {depth}")
    c = np.asarray(codes, dtype=np.uint64)
    x = np.zeros(len(c), dtype=np.uint64)
    y = np.zeros(len(c), dtype=np.uint64)
    z = np.zeros(len(c), dtype=np.uint64)
    one = np.uint64(1)
    for k in range(depth):
        x |= ((c >> np.uint64(3 * k)) & one) << np.uint64(k)
        y |= ((c >> np.uint64(3 * k + 1)) & one) << np.uint64(k)
        z |= ((c >> np.uint64(3 * k + 2)) & one) << np.uint64(k)
    return np.stack([x, y, z], axis=1).astype(np.int64)
