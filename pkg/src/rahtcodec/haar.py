"""Region-adaptive Haar transform over occupied 2x2x2 voxels.

Each occupied parent voxel holds up to eight children at offsets
(dx, dy, dz).  A cascade of weighted two-point butterflies decomposes the
children's normalized attributes g = A / sqrt(w): one Z stage pairs
offsets across dz, two Y stages pair the results across dy, four X stages
across dx.  Labels accumulate L/H through the Z -> Y -> X order, giving
one DC (LLL) and up to seven AC outputs per voxel.

The butterfly for weights w1, w2 (lower/upper along the active axis):

    gl = ( sqrt(w1) g1 + sqrt(w2) g2) / sqrt(w1 + w2)
    gh = (-sqrt(w2) g1 + sqrt(w1) g2) / sqrt(w1 + w2)

with both output weights w1 + w2.  When one side is empty the occupied
value passes through unchanged and the high slot is invalid (weight 0).
Empty slots hold g = 0, so one vectorized formula realizes both cases:
sqrt(w)/sqrt(w + 0) is exactly 1.0 in IEEE754 and the empty operand
contributes exactly 0.

Every valid stage is a planar rotation, so total energy is conserved and
the count of valid AC slots per voxel is (occupied children - 1).
"""

from dataclasses import dataclass

import numpy as np

from .pyramid import ScaleLevel

# Serialization order of the seven AC slots.
AC_LABELS = ("LLH", "LHL", "LHH", "HLL", "HLH", "HHL", "HHH")


def butterfly(g1, g2, w1, w2):
    """Single weighted butterfly; returns (gl, gh, wl, wh).

    Accepts scalars or broadcastable arrays.  A pair with both weights
    zero is an error; a pair with one empty side passes the occupied
    value through and returns wh = 0 to mark the high slot invalid.
    """
    g1 = np.asarray(g1, dtype=np.float64)
    g2 = np.asarray(g2, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    if np.any((w1 < 0) | (w2 < 0)):
        raise ValueError("negative weight")
    wsum = w1 + w2
    if np.any(wsum == 0):
        raise ValueError("butterfly on two empty slots")
    root = np.sqrt(wsum)
    a = np.sqrt(w1) / root
    b = np.sqrt(w2) / root
    gl = a * g1 + b * g2
    gh = -b * g1 + a * g2
    gh = np.where((w1 == 0) | (w2 == 0), 0.0, gh)
    return gl, gh, wsum, np.where((w1 == 0) | (w2 == 0), 0.0, wsum)


@dataclass
class CoefficientSet:
    """Transform output for one scale.

    dc : (M, C) DC per parent voxel
    ac : (M, 7, C) AC values in AC_LABELS order, zero where invalid
    valid : (M, 7) bool slot validity
    scale : scale of the child level that was transformed
    """

    scale: int
    dc: np.ndarray
    ac: np.ndarray
    valid: np.ndarray

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def flat_ac(self) -> np.ndarray:
        """Valid AC slots flattened to (n_valid, C), parent-major then label order."""
        return self.ac[self.valid]

    def with_flat_ac(self, values: np.ndarray) -> "CoefficientSet":
        """Return a copy whose valid AC slots are replaced by ``values``."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_valid, self.ac.shape[2]):
            raise ValueError("flat AC shape mismatch")
        ac = np.zeros_like(self.ac)
        ac[self.valid] = values
        return CoefficientSet(scale=self.scale, dc=self.dc.copy(), ac=ac, valid=self.valid)


def _slot_index(level: ScaleLevel) -> np.ndarray:
    off = level.positions & 1
    return off[:, 0] + 2 * off[:, 1] + 4 * off[:, 2]


def _scatter(level: ScaleLevel, g: np.ndarray, n_parents: int):
    """Arrange child values/weights into (M, 8, C) / (M, 8) slot arrays."""
    slots = _slot_index(level)
    par = level.parent_index
    G = np.zeros((n_parents, 8, g.shape[1]), dtype=np.float64)
    W = np.zeros((n_parents, 8), dtype=np.int64)
    G[par, slots] = g
    W[par, slots] = level.w
    return G, W


def _fwd_stage(G, W):
    """One butterfly stage pairing lower/upper halves of the slot axis."""
    h = G.shape[1] // 2
    g1, g2 = G[:, :h], G[:, h:]
    w1, w2 = W[:, :h], W[:, h:]
    wsum = w1 + w2
    root = np.sqrt(np.where(wsum > 0, wsum, 1).astype(np.float64))
    a = (np.sqrt(w1.astype(np.float64)) / root)[..., None]
    b = (np.sqrt(w2.astype(np.float64)) / root)[..., None]
    gl = a * g1 + b * g2
    gh = -b * g1 + a * g2
    wh = np.where((w1 > 0) & (w2 > 0), wsum, 0)
    return gl, gh, wsum, wh


def _inv_stage(gl, gh, w1, w2):
    """Inverse of :func:`_fwd_stage` given the original pair weights."""
    wsum = w1 + w2
    root = np.sqrt(np.where(wsum > 0, wsum, 1).astype(np.float64))
    a = (np.sqrt(w1.astype(np.float64)) / root)[..., None]
    b = (np.sqrt(w2.astype(np.float64)) / root)[..., None]
    g1 = a * gl - b * gh
    g2 = b * gl + a * gh
    return np.concatenate([g1, g2], axis=1)


def _weight_cascade(W):
    """Weights entering each stage of the cascade, for the inverse path."""
    h = 4
    wz1, wz2 = W[:, :h], W[:, h:]
    wl = wz1 + wz2
    wh = np.where((wz1 > 0) & (wz2 > 0), wz1 + wz2, 0)
    wy = {"L": (wl[:, :2], wl[:, 2:]), "H": (wh[:, :2], wh[:, 2:])}
    second = {}
    for k, (a_, b_) in wy.items():
        s = a_ + b_
        hi = np.where((a_ > 0) & (b_ > 0), s, 0)
        second[k + "L"] = s
        second[k + "H"] = hi
    third = {}
    for k in ("LL", "LH", "HL", "HH"):
        s = second[k]
        third[k] = (s[:, :1], s[:, 1:])
    return wy, third


def forward_scale(level: ScaleLevel, g: np.ndarray | None = None,
                  n_parents: int | None = None) -> CoefficientSet:
    """Transform one level's nodes into per-parent DC + AC coefficients.

    ``g`` defaults to the level's normalized attributes; pass predicted
    normalized values to transform a prediction over the same geometry.
    """
    if level.parent_index is None:
        raise ValueError("level has no parent linkage; build the pyramid one level higher")
    if g is None:
        g = level.normalized()
    g = np.asarray(g, dtype=np.float64)
    if n_parents is None:
        n_parents = int(level.parent_index[-1]) + 1
    G, W = _scatter(level, g, n_parents)

    gl, gh, wl, wh = _fwd_stage(G, W)
    gll, glh, wll, wlh = _fwd_stage(gl, wl)
    ghl, ghh, whl, whh = _fwd_stage(gh, wh)
    glll, gllh, _, wllh = _fwd_stage(gll, wll)
    glhl, glhh, _, wlhh = _fwd_stage(glh, wlh)
    ghll, ghlh, _, whlh = _fwd_stage(ghl, whl)
    ghhl, ghhh, _, whhh = _fwd_stage(ghh, whh)

    # X-stage low outputs other than LLL are AC too; their validity is the
    # weight of the slot itself (nonzero iff any child reached it).
    def _lowvalid(wpair):
        return (wpair[:, :1] + wpair[:, 1:]) > 0

    ac = np.concatenate([gllh, glhl, glhh, ghll, ghlh, ghhl, ghhh], axis=1)
    valid = np.concatenate([
        wllh > 0,
        _lowvalid(wlh), wlhh > 0,
        _lowvalid(whl), whlh > 0,
        _lowvalid(whh), whhh > 0,
    ], axis=1)
    return CoefficientSet(scale=level.scale, dc=glll[:, 0, :], ac=ac * valid[..., None],
                          valid=valid)


def valid_mask(level: ScaleLevel, n_parents: int | None = None) -> np.ndarray:
    """Slot validity (M, 7) from geometry alone, matching forward_scale.

    The decoder uses this to size payloads and place decoded AC values
    without knowing any attribute.
    """
    if level.parent_index is None:
        raise ValueError("level has no parent linkage")
    if n_parents is None:
        n_parents = int(level.parent_index[-1]) + 1
    slots = _slot_index(level)
    W = np.zeros((n_parents, 8), dtype=np.int64)
    W[level.parent_index, slots] = level.w
    _, third = _weight_cascade(W)
    a, b = third["LL"]
    cols = [(a > 0) & (b > 0)]
    for k in ("LH", "HL", "HH"):
        a, b = third[k]
        cols.append((a + b) > 0)
        cols.append((a > 0) & (b > 0))
    return np.concatenate(cols, axis=1)


def inverse_scale(coeffs: CoefficientSet, level: ScaleLevel,
                  dc: np.ndarray | None = None) -> np.ndarray:
    """Invert :func:`forward_scale`; returns g at the level's nodes.

    ``dc`` overrides the coefficient set's DC (the decoder supplies the
    reconstructed DC from one scale up).
    """
    if level.parent_index is None:
        raise ValueError("level has no parent linkage")
    n_parents = coeffs.dc.shape[0]
    C = coeffs.ac.shape[2]
    slots = _slot_index(level)
    W = np.zeros((n_parents, 8), dtype=np.int64)
    W[level.parent_index, slots] = level.w
    wy, third = _weight_cascade(W)

    if dc is None:
        dc = coeffs.dc
    glll = np.asarray(dc, dtype=np.float64).reshape(n_parents, 1, C)
    a = coeffs.ac
    gllh, glhl, glhh = a[:, 0:1], a[:, 1:2], a[:, 2:3]
    ghll, ghlh, ghhl, ghhh = a[:, 3:4], a[:, 4:5], a[:, 5:6], a[:, 6:7]

    gll = _inv_stage(glll, gllh, *third["LL"])
    glh = _inv_stage(glhl, glhh, *third["LH"])
    ghl = _inv_stage(ghll, ghlh, *third["HL"])
    ghh = _inv_stage(ghhl, ghhh, *third["HH"])
    gl = _inv_stage(gll, glh, *wy["L"])
    gh = _inv_stage(ghl, ghh, *wy["H"])
    G = _inv_stage(gl, gh, W[:, :4], W[:, 4:])
    return G[level.parent_index, slots]
