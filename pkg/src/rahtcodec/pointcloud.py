"""Voxelized point clouds: canonical ordering, PLY I/O, color transforms.

A cloud is a set of distinct integer voxel positions inside a cubic grid
of side 2**depth, each carrying a float attribute vector (RGB, YUV, or a
generic scalar).  Everything downstream assumes the canonical form
produced by :func:`make_cloud`: positions sorted by Morton code with no
duplicates.
"""

import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import PlyError
from .morton import MAX_DEPTH, morton_encode

MAX_POINTS = 2**31

# BT.709 analog full-range RGB -> YUV.  Luma weights are the standard
# constants; each chroma axis is the scaled color difference
#   U = (B - Y) / (2 (1 - Kb)) + 128,   V = (R - Y) / (2 (1 - Kr)) + 128
# so gray inputs map to (Y, 128, 128) and the matrix is exactly invertible.
_KR, _KB = 0.2126, 0.0722
_KG = 1.0 - _KR - _KB
RGB_TO_YUV_MATRIX = np.array(
    [
        [_KR, _KG, _KB],
        [-_KR / (2 * (1 - _KB)), -_KG / (2 * (1 - _KB)), 0.5],
        [0.5, -_KG / (2 * (1 - _KR)), -_KB / (2 * (1 - _KR))],
    ]
)
YUV_OFFSET = np.array([0.0, 128.0, 128.0])
YUV_TO_RGB_MATRIX = np.linalg.inv(RGB_TO_YUV_MATRIX)


def rgb_to_yuv(rgb: np.ndarray) -> np.ndarray:
    """Convert (N, 3) full-range RGB in [0, 255] to YUV with 128-offset chroma."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return rgb @ RGB_TO_YUV_MATRIX.T + YUV_OFFSET


def yuv_to_rgb(yuv: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`rgb_to_yuv`.  No clamping is applied."""
    yuv = np.asarray(yuv, dtype=np.float64)
    return (yuv - YUV_OFFSET) @ YUV_TO_RGB_MATRIX.T


@dataclass
class VoxelizedPointCloud:
    """Canonical voxel cloud.

    positions : (N, 3) int64, Morton-sorted, no duplicates
    attributes : (N, C) float64
    codes : (N,) uint64 Morton codes of ``positions``
    channel_peak : (C,) float64 peak value per channel for PSNR
    """

    depth: int
    positions: np.ndarray
    attributes: np.ndarray
    codes: np.ndarray
    channel_peak: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.positions)

    @property
    def n_channels(self) -> int:
        return self.attributes.shape[1]

    def with_attributes(self, attributes, channel_peak=None) -> "VoxelizedPointCloud":
        attributes = np.ascontiguousarray(attributes, dtype=np.float64)
        if attributes.shape[0] != self.n_points:
            raise ValueError("attribute count does not match point count")
        if channel_peak is None:
            channel_peak = np.full(attributes.shape[1], 255.0)
        return replace(self, attributes=attributes,
                       channel_peak=np.asarray(channel_peak, dtype=np.float64))


def infer_depth(positions: np.ndarray) -> int:
    """Smallest depth whose grid contains every coordinate (at least 1)."""
    hi = int(np.max(positions)) if len(positions) else 0
    depth = 1
    while (1 << depth) <= hi:
        depth += 1
    return depth


def make_cloud(positions, attributes, depth=None, channel_peak=None) -> VoxelizedPointCloud:
    """Validate and canonicalize raw arrays into a :class:`VoxelizedPointCloud`.

    Sorts by Morton code and rejects duplicate positions, negative or
    out-of-grid coordinates, and clouds larger than ``MAX_POINTS``.
    """
    pos = np.asarray(positions)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise ValueError(f"positions must have shape (N, 3), got {pos.shape}")
    if np.issubdtype(pos.dtype, np.floating):
        if not np.all(pos == np.floor(pos)):
            raise ValueError("positions must be integer-valued")
    pos = pos.astype(np.int64)
    attr = np.asarray(attributes, dtype=np.float64)
    if attr.ndim == 1:
        attr = attr[:, None]
    if attr.shape[0] != pos.shape[0]:
        raise ValueError("positions and attributes disagree on point count")
    if len(pos) == 0:
        raise ValueError("cloud is empty")
    if len(pos) > MAX_POINTS:
        raise ValueError(f"cloud exceeds {MAX_POINTS} points")
    if pos.min() < 0:
        raise ValueError("negative coordinates")
    if depth is None:
        depth = infer_depth(pos)
    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in [1, {MAX_DEPTH}], got {depth}")
    if pos.max() >= (1 << depth):
        raise ValueError(f"coordinates do not fit depth {depth}")

    codes = morton_encode(pos, depth)
    order = np.argsort(codes, kind="stable")
    codes = codes[order]
    if len(codes) > 1 and np.any(codes[1:] == codes[:-1]):
        raise ValueError("duplicate voxel positions")
    if channel_peak is None:
        channel_peak = np.full(attr.shape[1], 255.0)
    return VoxelizedPointCloud(
        depth=int(depth),
        positions=np.ascontiguousarray(pos[order]),
        attributes=np.ascontiguousarray(attr[order]),
        codes=codes,
        channel_peak=np.asarray(channel_peak, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# PLY

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_ply_header(raw: bytes):
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply") or end < 0:
        raise PlyError("not a PLY file")
    end = raw.index(b"\n", end) + 1
    header = raw[:end].decode("ascii", errors="replace")
    fmt = None
    elements = []  # (name, count, [(prop, dtype)])
    for line in header.splitlines():
        parts = line.strip().split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise PlyError("property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[-1], "list"))
            else:
                if parts[1] not in _PLY_DTYPES:
                    raise PlyError(f"unsupported property type {parts[1]}")
                elements[-1][2].append((parts[-1], _PLY_DTYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyError(f"unsupported PLY format {fmt!r}")
    if not elements or elements[0][0] != "vertex":
        raise PlyError("vertex must be the first element")
    if any(t == "list" for _, t in elements[0][2]):
        raise PlyError("list properties on vertex are unsupported")
    return fmt, elements, end


def load_ply(path, attribute_names=None, depth=None) -> VoxelizedPointCloud:
    """Read a voxelized cloud from an ASCII or binary little-endian PLY.

    Vertex properties x, y, z must hold nonnegative integer values.
    Attributes default to (red, green, blue) when present, else to the
    single remaining scalar property; pass ``attribute_names`` to choose
    explicitly.  Duplicate positions are an error.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    fmt, elements, body_at = _parse_ply_header(raw)
    _, count, props = elements[0]
    names = [n for n, _ in props]
    for ax in ("x", "y", "z"):
        if ax not in names:
            raise PlyError(f"missing vertex property {ax!r}")
    if count == 0:
        raise PlyError("empty vertex element")

    if fmt == "ascii":
        text = raw[body_at:].decode("ascii", errors="replace")
        rows = text.splitlines()
        if len(rows) < count:
            raise PlyError("truncated PLY body")
        try:
            table = np.loadtxt(io.StringIO("\n".join(rows[:count])), dtype=np.float64, ndmin=2)
        except ValueError as exc:
            raise PlyError(f"bad ASCII vertex data: {exc}") from None
        if table.shape != (count, len(names)):
            raise PlyError("vertex row shape does not match header")
        columns = {n: table[:, i] for i, n in enumerate(names)}
    else:
        rec = np.dtype([(n, "<" + t) for n, t in props])
        body = raw[body_at:body_at + rec.itemsize * count]
        if len(body) < rec.itemsize * count:
            raise PlyError("truncated PLY body")
        table = np.frombuffer(body, dtype=rec, count=count)
        columns = {n: table[n].astype(np.float64) for n in names}

    if attribute_names is None:
        if all(c in names for c in ("red", "green", "blue")):
            attribute_names = ["red", "green", "blue"]
        else:
            rest = [n for n in names if n not in ("x", "y", "z")]
            if len(rest) != 1:
                raise PlyError(
                    "no red/green/blue properties and no single scalar attribute; "
                    "pass attribute_names")
            attribute_names = rest
    for n in attribute_names:
        if n not in columns:
            raise PlyError(f"missing attribute property {n!r}")

    pos = np.stack([columns["x"], columns["y"], columns["z"]], axis=1)
    attr = np.stack([columns[n] for n in attribute_names], axis=1)
    try:
        return make_cloud(pos, attr, depth=depth)
    except ValueError as exc:
        raise PlyError(str(exc)) from None


def write_ply(path, cloud: VoxelizedPointCloud, ascii_format=False, attribute_names=None):
    """Write a cloud to PLY (binary little-endian unless ``ascii_format``).

    Three-channel attributes are written as 8-bit red/green/blue, rounded
    and clamped to [0, 255]; any other channel count is written as float64
    scalars.  Positions are written as int32.
    """
    n, c = cloud.n_points, cloud.n_channels
    as_rgb = c == 3
    if attribute_names is None:
        attribute_names = ["red", "green", "blue"] if as_rgb else [f"attr_{i}" for i in range(c)]
    if len(attribute_names) != c:
        raise ValueError("attribute_names length must match channel count")

    lines = ["ply",
             "format ascii 1.0" if ascii_format else "format binary_little_endian 1.0",
             f"element vertex {n}",
             "property int x", "property int y", "property int z"]
    kind = "uchar" if as_rgb else "double"
    lines += [f"property {kind} {name}" for name in attribute_names]
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")

    if as_rgb:
        attr = np.clip(np.floor(cloud.attributes + 0.5), 0, 255).astype(np.uint8)
    else:
        attr = cloud.attributes

    with open(path, "wb") as fh:
        fh.write(header)
        if ascii_format:
            for i in range(n):
                fields = [str(int(v)) for v in cloud.positions[i]]
                if as_rgb:
                    fields += [str(int(v)) for v in attr[i]]
                else:
                    fields += [repr(float(v)) for v in attr[i]]
                fh.write((" ".join(fields) + "\n").encode("ascii"))
        else:
            rec = np.dtype([("x", "<i4"), ("y", "<i4"), ("z", "<i4")]
                           + [(name, "<u1" if as_rgb else "<f8") for name in attribute_names])
            out = np.empty(n, dtype=rec)
            out["x"], out["y"], out["z"] = (cloud.positions[:, k].astype(np.int32) for k in range(3))
            for j, name in enumerate(attribute_names):
                out[name] = attr[:, j]
            fh.write(out.tobytes())
