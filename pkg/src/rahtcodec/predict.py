"""Cross-scale attribute prediction.

The decoder knows the reconstructed averages one scale up; prediction
carries them down to the child scale so only the residual of each AC
coefficient needs coding.

The base predictor replicates every parent average into all eight child
cells of its voxel (dense unpooling), then filters with a 3x3x3 kernel
whose taps weight by distance class: 4 at the center, 3 across a face, 2
across an edge, 1 across a corner, renormalized over occupied taps.
Because unpooling is dense, every tap whose parent voxel is occupied is
occupied, so the 27 taps collapse onto at most 8 distinct parents; the
module precomputes that 8x8 parity/offset weight table and gathers
neighbor parents directly.  Numerator and denominator stay unnormalized
integer-weighted sums, so a region with a constant integer value
predicts that value exactly.

An optional refiner network sharpens the prediction: a loadable graph of
affine layers, same-scale 3x3x3 aggregations, and exactly one stride-2
upsampling, applied to the parent-scale prediction error and added to
the child-scale base prediction.  A refiner with all-zero weights leaves
the base prediction untouched bit for bit.
"""

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import WeightFileError
from .haar import CoefficientSet
from .morton import morton_encode
from .pyramid import ScaleLevel

_DISTANCE_CLASS_WEIGHT = (4.0, 3.0, 2.0, 1.0)


def _build_parity_table() -> np.ndarray:
    """Effective weight of each neighbor parent for each child parity.

    Entry [r, t] sums the tap weights of all 3x3x3 offsets d whose cell
    q + d falls in parent (q >> 1) + e(r, t), where per axis e = r - 1 + t.
    """
    table = np.zeros((8, 8))
    for r_idx in range(8):
        r = ((r_idx >> 0) & 1, (r_idx >> 1) & 1, (r_idx >> 2) & 1)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    d = (dx, dy, dz)
                    t_idx = 0
                    for ax in range(3):
                        e = (r[ax] + d[ax]) >> 1  # floor((r + d) / 2)
                        t_idx |= (e - (r[ax] - 1)) << ax
                    nnz = sum(1 for v in d if v)
                    table[r_idx, t_idx] += _DISTANCE_CLASS_WEIGHT[nnz]
    return table


_PARITY_WEIGHTS = _build_parity_table()


def _lookup(level: ScaleLevel, positions: np.ndarray, res_bits: int):
    """Row indices of ``positions`` in a level, with a found mask."""
    if res_bits == 0:
        found = np.all(positions == 0, axis=1)
        return np.zeros(len(positions), dtype=np.intp), found
    grid = 1 << res_bits
    inside = np.all((positions >= 0) & (positions < grid), axis=1)
    safe = np.where(inside[:, None], positions, 0)
    codes = morton_encode(safe, res_bits)
    idx = np.searchsorted(level.codes, codes)
    idx_c = np.minimum(idx, level.n_nodes - 1)
    found = inside & (level.codes[idx_c] == codes)
    return idx_c, found


def idw_predict(values: np.ndarray, coarse: ScaleLevel, fine: ScaleLevel,
                depth: int) -> np.ndarray:
    """Carry per-node values at ``coarse`` down to ``fine`` occupied nodes."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != coarse.n_nodes:
        raise ValueError("values do not match the coarse level")
    if fine.scale != coarse.scale - 1:
        raise ValueError("levels are not adjacent scales")
    res_c = depth - coarse.scale
    parent = fine.positions >> 1
    parity = fine.positions & 1
    r_idx = parity[:, 0] + 2 * parity[:, 1] + 4 * parity[:, 2]

    num = np.zeros((fine.n_nodes, values.shape[1]))
    den = np.zeros(fine.n_nodes)
    for t in range(8):
        t_vec = np.array([(t >> 0) & 1, (t >> 1) & 1, (t >> 2) & 1])
        target = parent + (parity + t_vec) - 1
        weight = _PARITY_WEIGHTS[r_idx, t]
        idx, found = _lookup(coarse, target, res_c)
        w_eff = np.where(found, weight, 0.0)
        num += w_eff[:, None] * values[idx]
        den += w_eff
    return num / den[:, None]


# ---------------------------------------------------------------------------
# Refiner network

class _Layer:
    kind = 0

    def params(self):
        return ()


class Linear(_Layer):
    kind = 1

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("linear layer shape mismatch")

    @property
    def shape(self):
        return self.weight.shape

    def params(self):
        return (self.weight, self.bias)

    def apply(self, feats, level, depth):
        return feats @ self.weight + self.bias


class Relu(_Layer):
    kind = 2

    @property
    def shape(self):
        return (0, 0)

    def apply(self, feats, level, depth):
        return np.maximum(feats, 0.0)


class Conv3(_Layer):
    """Same-scale 3x3x3 neighborhood aggregation with per-offset matrices."""

    kind = 3

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.ndim != 3 or self.weight.shape[0] != 27 \
                or self.bias.shape != (self.weight.shape[2],):
            raise ValueError("conv3 layer shape mismatch")

    @property
    def shape(self):
        return self.weight.shape[1:]

    def params(self):
        return (self.weight, self.bias)

    def apply(self, feats, level, depth):
        res = depth - level.scale
        out = np.broadcast_to(self.bias, (level.n_nodes, self.weight.shape[2])).copy()
        k = 0
        for dz in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    target = level.positions + (dx, dy, dz)
                    idx, found = _lookup(level, target, res)
                    contrib = feats[idx] @ self.weight[k]
                    out += contrib * found[:, None]
                    k += 1
        return out


class Upsample2(_Layer):
    """Stride-2 transposed step: parent feature to each occupied child."""

    kind = 4

    def __init__(self, weight, bias):
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.ndim != 3 or self.weight.shape[0] != 8 \
                or self.bias.shape != (self.weight.shape[2],):
            raise ValueError("upsample layer shape mismatch")

    @property
    def shape(self):
        return self.weight.shape[1:]

    def params(self):
        return (self.weight, self.bias)

    def apply_pair(self, feats, coarse, fine):
        parity = fine.positions & 1
        slot = parity[:, 0] + 2 * parity[:, 1] + 4 * parity[:, 2]
        parent = fine.parent_index
        out = np.empty((fine.n_nodes, self.weight.shape[2]))
        for s in range(8):
            sel = slot == s
            out[sel] = feats[parent[sel]] @ self.weight[s]
        return out + self.bias


_LAYER_KINDS = {1: Linear, 2: Relu, 3: Conv3, 4: Upsample2}


class PredictionRefiner:
    """Loadable inference graph producing a child-scale correction.

    The graph runs layers in order on parent-scale features; exactly one
    :class:`Upsample2` moves them to the child scale.  Output channel
    count must equal input channel count.
    """

    def __init__(self, layers):
        self.layers = list(layers)
        ups = [i for i, l in enumerate(self.layers) if isinstance(l, Upsample2)]
        if len(ups) != 1:
            raise ValueError("refiner needs exactly one upsampling layer")
        self._up_at = ups[0]

    def __call__(self, feats, coarse: ScaleLevel, fine: ScaleLevel, depth: int) -> np.ndarray:
        x = np.asarray(feats, dtype=np.float64)
        level = coarse
        for i, layer in enumerate(self.layers):
            if i == self._up_at:
                x = layer.apply_pair(x, coarse, fine)
                level = fine
            else:
                x = layer.apply(x, level, depth)
        return x

    @classmethod
    def zero(cls, channels: int, hidden: int = 128) -> "PredictionRefiner":
        """All-zero default topology: affine in, one aggregation, upsample,
        affine out.  Produces exactly zero correction."""
        return cls([
            Linear(np.zeros((channels, hidden)), np.zeros(hidden)),
            Relu(),
            Conv3(np.zeros((27, hidden, hidden)), np.zeros(hidden)),
            Relu(),
            Upsample2(np.zeros((8, hidden, hidden)), np.zeros(hidden)),
            Linear(np.zeros((hidden, channels)), np.zeros(channels)),
        ])

    # -- weight file: magic, version, layer table, checksum ----------------

    MAGIC = b"DRWT"
    VERSION = 1

    def save(self, path):
        blob = bytearray()
        blob += self.MAGIC
        blob += struct.pack("<BH", self.VERSION, len(self.layers))
        for layer in self.layers:
            cin, cout = layer.shape
            blob += struct.pack("<BHH", layer.kind, cin, cout)
            for arr in layer.params():
                blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
        blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
        with open(path, "wb") as fh:
            fh.write(bytes(blob))

    @classmethod
    def load(cls, path) -> "PredictionRefiner":
        with open(path, "rb") as fh:
            blob = fh.read()
        if len(blob) < 11 or blob[:4] != cls.MAGIC:
            raise WeightFileError("not a refiner weight file")
        body, tail = blob[:-4], blob[-4:]
        if struct.unpack("<I", tail)[0] != (zlib.crc32(body) & 0xFFFFFFFF):
            raise WeightFileError("weight file checksum mismatch")
        version, n_layers = struct.unpack_from("<BH", body, 4)
        if version != cls.VERSION:
            raise WeightFileError(f"unsupported weight file version {version}")
        at = 7
        layers = []
        try:
            for _ in range(n_layers):
                kind, cin, cout = struct.unpack_from("<BHH", body, at)
                at += 5
                if kind not in _LAYER_KINDS:
                    raise WeightFileError(f"unknown layer kind {kind}")
                if kind == Relu.kind:
                    layers.append(Relu())
                    continue
                lead = {1: 1, 3: 27, 4: 8}[kind]
                n_w, n_b = lead * cin * cout, cout
                need = 8 * (n_w + n_b)
                if at + need > len(body):
                    raise WeightFileError("truncated weight file")
                w = np.frombuffer(body, dtype="<f8", count=n_w, offset=at)
                b = np.frombuffer(body, dtype="<f8", count=n_b, offset=at + 8 * n_w)
                at += need
                shape = (cin, cout) if kind == Linear.kind else (lead, cin, cout)
                layers.append(_LAYER_KINDS[kind](w.reshape(shape).copy(), b.copy()))
        except struct.error:
            raise WeightFileError("truncated weight file") from None
        if at != len(body):
            raise WeightFileError("trailing bytes in weight file")
        try:
            return cls(layers)
        except ValueError as exc:
            raise WeightFileError(str(exc)) from None


@dataclass
class PredictionConfig:
    """Per-encode prediction settings.

    ``start_scale`` is the highest coefficient scale coded predictively;
    None defaults to (scales - 2).  The refiner applies only where the
    grandparent scale exists, i.e. coefficient scales <= scales - 3.
    """

    enabled: bool = True
    start_scale: int | None = None
    refiner: PredictionRefiner | None = None

    def resolved_start(self, scales: int) -> int:
        if not self.enabled:
            return -1
        return scales - 2 if self.start_scale is None else min(self.start_scale, scales - 1)


def compensate(parent_avg: np.ndarray, grandparent_idw: np.ndarray,
               base_idw: np.ndarray, refiner: PredictionRefiner,
               parent_level: ScaleLevel, target_level: ScaleLevel,
               depth: int) -> np.ndarray:
    """Refined prediction at the target scale.

    Feeds the parent-scale prediction error (reconstructed averages minus
    what the grandparent predicted for them) through the refiner and adds
    the correction to the base prediction.
    """
    err = np.asarray(parent_avg, dtype=np.float64) - grandparent_idw
    correction = refiner(err, parent_level, target_level, depth)
    if correction.shape != base_idw.shape:
        raise ValueError("refiner output shape mismatch")
    return base_idw + correction


def form_residual(coeffs: CoefficientSet, predicted: CoefficientSet) -> np.ndarray:
    """AC residual on valid slots, (n_valid, C); prediction DC is discarded."""
    if coeffs.valid.shape != predicted.valid.shape or \
            not np.array_equal(coeffs.valid, predicted.valid):
        raise ValueError("coefficient sets disagree on slot validity")
    return coeffs.flat_ac() - predicted.flat_ac()


def choose_mode(candidates, actual_avg: np.ndarray) -> int:
    """Index of the candidate with least mean squared error against the
    true averages; ties keep the earliest candidate."""
    if not candidates:
        raise ValueError("no candidates")
    actual = np.asarray(actual_avg, dtype=np.float64)
    errs = [float(np.mean((np.asarray(c) - actual) ** 2)) for c in candidates]
    return int(np.argmin(errs))
