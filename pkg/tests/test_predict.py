"""Inverse-distance upsampling predictor and the pluggable refiner.

The predictor is implemented as an 8-way parent gather with a
precomputed weight table.  The oracle here goes the long way around:
replicate each parent value into its 8 child cells of a dense grid,
then run an explicit 3x3x3 convolution whose taps are 4 (center), 3
(face), 2 (edge), 1 (corner), and normalize by the summed taps over
occupied cells.  Both routes must agree to float precision.
"""

import numpy as np
import pytest

from rahtcodec.errors import WeightFileError
from rahtcodec.predict import (
    PredictionConfig,
    PredictionRefiner,
    choose_mode,
    compensate,
    form_residual,
    idw_predict,
)
from rahtcodec.pyramid import build_pyramid

from conftest import random_cloud

_TAPS = np.zeros((3, 3, 3))
for dz in (-1, 0, 1):
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            dist = abs(dx) + abs(dy) + abs(dz)
            _TAPS[dz + 1, dy + 1, dx + 1] = (4, 3, 2, 1)[dist]


def _idw_dense_oracle(values, coarse, fine, depth):
    """Dense unpool + 27-tap normalized convolution, evaluated sparsely."""
    res_bits = depth - coarse.scale
    grid = 1 << res_bits
    dense = {}
    for parent_pos, val in zip(coarse.positions, values):
        base = parent_pos * 2
        for s in range(8):
            off = np.array([s & 1, (s >> 1) & 1, (s >> 2) & 1])
            dense[tuple(base + off)] = val
    out = np.zeros((fine.n_nodes, values.shape[1]))
    for i, p in enumerate(fine.positions):
        num = np.zeros(values.shape[1])
        den = 0.0
        for dz in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    q = (p[0] + dx, p[1] + dy, p[2] + dz)
                    if not all(0 <= c < grid * 2 for c in q):
                        continue
                    v = dense.get(q)
                    if v is None:
                        continue
                    w = _TAPS[dz + 1, dy + 1, dx + 1]
                    num += w * v
                    den += w
        out[i] = num / den
    return out


def _levels(rng, n_points, depth):
    cloud = random_cloud(rng, n_points, depth)
    pyr = build_pyramid(cloud)
    return cloud, pyr


def test_idw_matches_dense_oracle():
    rng = np.random.default_rng(50)
    for depth in (3, 4, 5):
        cloud, pyr = _levels(rng, 150, depth)
        for t in range(len(pyr.levels) - 1):
            fine, coarse = pyr.levels[t], pyr.levels[t + 1]
            values = rng.normal(size=(coarse.n_nodes, 3))
            got = idw_predict(values, coarse, fine, depth)
            want = _idw_dense_oracle(values, coarse, fine, depth)
            assert np.max(np.abs(got - want)) < 1e-12 * max(1.0, np.max(np.abs(want)))


def test_idw_constant_field_is_exact():
    # integer tap weights divide out exactly for a constant input
    rng = np.random.default_rng(51)
    cloud, pyr = _levels(rng, 400, 6)
    for t in range(len(pyr.levels) - 1):
        fine, coarse = pyr.levels[t], pyr.levels[t + 1]
        values = np.full((coarse.n_nodes, 3), 123.0)
        got = idw_predict(values, coarse, fine, cloud.depth)
        assert np.all(got == 123.0)


def test_idw_isolated_parent_copies_value():
    # a parent with no occupied neighbors contributes only its own taps,
    # so every child sees exactly the parent value
    from rahtcodec.pointcloud import make_cloud

    pos = np.array([[4, 4, 4], [5, 4, 4], [4, 5, 5]])
    attrs = np.array([[10.0], [20.0], [30.0]])
    cloud = make_cloud(pos, attrs, depth=4)
    pyr = build_pyramid(cloud, scales=2)
    fine, coarse = pyr.levels[0], pyr.levels[1]
    assert coarse.n_nodes == 1
    values = np.array([[7.5]])
    got = idw_predict(values, coarse, fine, 4)
    assert np.all(got == 7.5)


def test_idw_prediction_shrinks_transform_residual():
    # on smooth data the predicted coefficients absorb most of the AC
    # energy over the scales where prediction runs (top-2 down to 0)
    from conftest import gradient_cloud
    from rahtcodec.haar import forward_scale

    rng = np.random.default_rng(52)
    cloud = gradient_cloud(rng, 2000, 6)
    pyr = build_pyramid(cloud)
    raw_e = idw_e = 0.0
    for t in range(len(pyr.levels) - 3, -1, -1):
        fine, coarse = pyr.levels[t], pyr.levels[t + 1]
        actual = forward_scale(fine, n_parents=coarse.n_nodes).flat_ac()
        idw = idw_predict(coarse.averages(), coarse, fine, cloud.depth)
        g_pred = idw * np.sqrt(fine.w.astype(np.float64))[:, None]
        pred = forward_scale(fine, g=g_pred, n_parents=coarse.n_nodes).flat_ac()
        raw_e += float(np.sum(actual ** 2))
        idw_e += float(np.sum((actual - pred) ** 2))
    assert idw_e < 0.5 * raw_e


# --- refiner --------------------------------------------------------------

def test_zero_refiner_outputs_exact_zero():
    rng = np.random.default_rng(53)
    cloud, pyr = _levels(rng, 300, 5)
    fine, coarse = pyr.levels[1], pyr.levels[2]
    ref = PredictionRefiner.zero(3)
    feats = rng.normal(size=(coarse.n_nodes, 3))
    out = ref(feats, coarse, fine, cloud.depth)
    assert out.shape == (fine.n_nodes, 3)
    assert np.all(out == 0.0)


def test_compensate_with_zero_refiner_is_base():
    rng = np.random.default_rng(54)
    cloud, pyr = _levels(rng, 300, 5)
    child, parent, grand = pyr.levels[0], pyr.levels[1], pyr.levels[2]
    parent_avg = parent.averages()
    gp_idw = idw_predict(grand.averages(), grand, parent, cloud.depth)
    base = idw_predict(parent_avg, parent, child, cloud.depth)
    ref = PredictionRefiner.zero(3)
    out = compensate(parent_avg, gp_idw, base, ref, parent, child, cloud.depth)
    assert np.array_equal(out, base)


def test_refiner_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(55)
    ref = PredictionRefiner.zero(3, hidden=16)
    # perturb every parameter so the roundtrip is not trivially zeros
    for layer in ref.layers:
        for p in layer.params():
            p += rng.normal(scale=0.05, size=p.shape)
    path = tmp_path / "w.bin"
    ref.save(path)
    back = PredictionRefiner.load(path)
    assert len(back.layers) == len(ref.layers)
    for la, lb in zip(ref.layers, back.layers):
        assert type(la) is type(lb)
        for pa, pb in zip(la.params(), lb.params()):
            assert np.array_equal(pa, pb)
    # loaded weights drive identical predictions
    cloud, pyr = _levels(rng, 200, 5)
    fine, coarse = pyr.levels[1], pyr.levels[2]
    feats = rng.normal(size=(coarse.n_nodes, 3))
    assert np.array_equal(ref(feats, coarse, fine, cloud.depth),
                          back(feats, coarse, fine, cloud.depth))


def test_refiner_file_tamper_detected(tmp_path):
    ref = PredictionRefiner.zero(2, hidden=8)
    path = tmp_path / "w.bin"
    ref.save(path)
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(WeightFileError):
        PredictionRefiner.load(path)


def test_refiner_file_truncation_detected(tmp_path):
    ref = PredictionRefiner.zero(2, hidden=8)
    path = tmp_path / "w.bin"
    ref.save(path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(WeightFileError):
        PredictionRefiner.load(path)


def test_refiner_file_trailing_bytes_detected(tmp_path):
    ref = PredictionRefiner.zero(2, hidden=8)
    path = tmp_path / "w.bin"
    ref.save(path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(WeightFileError):
        PredictionRefiner.load(path)


def test_refiner_rejects_bad_magic(tmp_path):
    path = tmp_path / "w.bin"
    path.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(WeightFileError):
        PredictionRefiner.load(path)


# --- mode selection -------------------------------------------------------

def test_choose_mode_picks_min_error():
    actual = np.array([[1.0, 0.0], [2.0, 0.0]])
    far = actual + 10.0
    near = actual + 0.1
    assert choose_mode([far, near], actual) == 1
    assert choose_mode([near, far], actual) == 0


def test_choose_mode_tie_prefers_first():
    actual = np.zeros((4, 2))
    a = actual + 1.0
    b = actual + 1.0
    assert choose_mode([a, b], actual) == 0


def test_form_residual_checks_slot_agreement():
    from rahtcodec.haar import forward_scale

    rng = np.random.default_rng(56)
    cloud, pyr = _levels(rng, 200, 5)
    child, parent = pyr.levels[0], pyr.levels[1]
    coeffs = forward_scale(child, n_parents=parent.n_nodes)
    shifted = coeffs.with_flat_ac(coeffs.flat_ac() + 1.0)
    res = form_residual(coeffs, shifted)
    assert np.allclose(res, -1.0)
    other = forward_scale(pyr.levels[1], n_parents=pyr.levels[2].n_nodes)
    with pytest.raises(ValueError):
        form_residual(coeffs, other)


# --- config ---------------------------------------------------------------

def test_prediction_config_start_resolution():
    assert PredictionConfig().resolved_start(6) == 4
    assert PredictionConfig(enabled=False).resolved_start(6) == -1
    assert PredictionConfig(start_scale=2).resolved_start(6) == 2
    # a start above the top clamps to the top coded scale
    assert PredictionConfig(start_scale=99).resolved_start(6) == 5
