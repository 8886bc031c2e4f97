"""Weighted Haar butterfly cascade over 2x2x2 voxels.

The two load-bearing facts checked here, each against an independent
route:

* the cascade's DC output equals the parent's sum-pooled attribute
  divided by the square root of its weight (pooling path vs transform
  path are separate code);
* the per-parent transform is orthonormal, so energy is conserved and
  the inverse is exact, for every one of the 255 occupancy patterns.
"""

import numpy as np
import pytest

from rahtcodec.haar import (
    AC_LABELS,
    CoefficientSet,
    butterfly,
    forward_scale,
    inverse_scale,
    valid_mask,
)
from rahtcodec.pointcloud import make_cloud
from rahtcodec.pyramid import build_pyramid

from conftest import random_cloud


def _single_parent_cloud(occupancy, rng, channels=3):
    """Cloud of one 2x2x2 voxel with the given child slots occupied."""
    slots = np.array(occupancy, dtype=np.int64)
    pos = np.stack([(slots >> 0) & 1, (slots >> 1) & 1, (slots >> 2) & 1], axis=1)
    attrs = rng.uniform(-100, 100, size=(len(slots), channels))
    return make_cloud(pos, attrs, depth=1)


def test_butterfly_matrix_is_orthonormal():
    rng = np.random.default_rng(30)
    for _ in range(200):
        w1, w2 = rng.uniform(0.5, 100, size=2)
        g1, g2 = rng.normal(size=2)
        gl, gh, wl, wh = butterfly(g1, g2, w1, w2)
        assert abs(gl * gl + gh * gh - (g1 * g1 + g2 * g2)) < 1e-9 * (g1 * g1 + g2 * g2 + 1)
        assert wl == w1 + w2 and wh == w1 + w2


def test_all_255_occupancy_patterns_invert_exactly():
    rng = np.random.default_rng(31)
    for occ in range(1, 256):
        slots = [s for s in range(8) if occ >> s & 1]
        cloud = _single_parent_cloud(slots, rng)
        pyr = build_pyramid(cloud, scales=1)
        coeffs = forward_scale(pyr.levels[0])
        g_hat = inverse_scale(coeffs, pyr.levels[0])
        g = pyr.levels[0].normalized()
        assert np.max(np.abs(g_hat - g)) < 1e-12 * max(1.0, np.max(np.abs(g)))


def test_all_255_occupancy_patterns_conserve_energy():
    rng = np.random.default_rng(32)
    for occ in range(1, 256):
        slots = [s for s in range(8) if occ >> s & 1]
        cloud = _single_parent_cloud(slots, rng)
        pyr = build_pyramid(cloud, scales=1)
        level = pyr.levels[0]
        coeffs = forward_scale(level)
        e_in = float(np.sum(level.normalized() ** 2))
        e_dc = float(np.sum(coeffs.dc ** 2))
        e_ac = float(np.sum(coeffs.flat_ac() ** 2))
        assert abs(e_dc + e_ac - e_in) < 1e-9 * e_in


def test_valid_count_equals_node_difference():
    rng = np.random.default_rng(33)
    for _ in range(20):
        cloud = random_cloud(rng, 300, 5)
        pyr = build_pyramid(cloud)
        for t in range(len(pyr.levels) - 1):
            child, parent = pyr.levels[t], pyr.levels[t + 1]
            coeffs = forward_scale(child, n_parents=parent.n_nodes)
            assert coeffs.n_valid == child.n_nodes - parent.n_nodes


def test_dc_equals_sum_pooling_route():
    # dual route: butterfly cascade vs plain reduceat sums
    rng = np.random.default_rng(34)
    for _ in range(10):
        cloud = random_cloud(rng, 400, 6)
        pyr = build_pyramid(cloud)
        for t in range(len(pyr.levels) - 1):
            child, parent = pyr.levels[t], pyr.levels[t + 1]
            coeffs = forward_scale(child, n_parents=parent.n_nodes)
            expected = parent.A / np.sqrt(parent.w.astype(np.float64))[:, None]
            assert np.max(np.abs(coeffs.dc - expected)) < 1e-9


def test_valid_mask_matches_transform():
    # geometry-only mask vs the mask the transform itself produces
    rng = np.random.default_rng(35)
    for _ in range(10):
        cloud = random_cloud(rng, 500, 6)
        pyr = build_pyramid(cloud)
        for t in range(len(pyr.levels) - 1):
            child, parent = pyr.levels[t], pyr.levels[t + 1]
            coeffs = forward_scale(child, n_parents=parent.n_nodes)
            mask = valid_mask(child, parent.n_nodes)
            assert np.array_equal(mask, coeffs.valid)


def test_single_child_passes_through():
    rng = np.random.default_rng(36)
    for slot in range(8):
        cloud = _single_parent_cloud([slot], rng)
        pyr = build_pyramid(cloud, scales=1)
        coeffs = forward_scale(pyr.levels[0])
        assert coeffs.n_valid == 0
        assert np.allclose(coeffs.dc[0], pyr.levels[0].normalized()[0])


def test_two_diagonal_children():
    # slots 0 and 7 differ in all three axes; the AC appears at the stage
    # where the partial sums finally meet (the last X stage)
    rng = np.random.default_rng(37)
    cloud = _single_parent_cloud([0, 7], rng, channels=1)
    pyr = build_pyramid(cloud, scales=1)
    level = pyr.levels[0]
    coeffs = forward_scale(level)
    assert coeffs.n_valid == 1
    g = level.normalized()[:, 0]
    gl, gh, _, _ = butterfly(g[0], g[1], 1.0, 1.0)
    assert abs(coeffs.dc[0, 0] - gl) < 1e-12
    assert abs(coeffs.flat_ac()[0, 0] - gh) < 1e-12


def test_flat_ac_roundtrip():
    rng = np.random.default_rng(38)
    cloud = random_cloud(rng, 300, 5)
    pyr = build_pyramid(cloud)
    child, parent = pyr.levels[1], pyr.levels[2]
    coeffs = forward_scale(child, n_parents=parent.n_nodes)
    flat = coeffs.flat_ac()
    assert flat.shape == (coeffs.n_valid, 3)
    rebuilt = coeffs.with_flat_ac(flat)
    assert np.array_equal(rebuilt.ac, coeffs.ac)
    assert rebuilt.ac.shape[1] == len(AC_LABELS)
    with pytest.raises(ValueError):
        coeffs.with_flat_ac(flat[:-1])


def test_inverse_accepts_substitute_dc():
    rng = np.random.default_rng(39)
    cloud = random_cloud(rng, 200, 5)
    pyr = build_pyramid(cloud)
    child, parent = pyr.levels[0], pyr.levels[1]
    coeffs = forward_scale(child, n_parents=parent.n_nodes)
    noisy_dc = coeffs.dc + rng.normal(scale=0.1, size=coeffs.dc.shape)
    g_hat = inverse_scale(coeffs, child, dc=noisy_dc)
    # substituting the exact dc must reproduce the default path bitwise
    g_ref = inverse_scale(coeffs, child, dc=coeffs.dc.copy())
    assert np.array_equal(inverse_scale(coeffs, child), g_ref)
    assert not np.allclose(g_hat, g_ref)


def test_cascade_is_orthonormal_at_scale():
    # per-scale Parseval on a real multi-parent level
    rng = np.random.default_rng(40)
    cloud = random_cloud(rng, 700, 6)
    pyr = build_pyramid(cloud)
    for t in range(len(pyr.levels) - 1):
        child, parent = pyr.levels[t], pyr.levels[t + 1]
        coeffs = forward_scale(child, n_parents=parent.n_nodes)
        e_in = float(np.sum(child.normalized() ** 2))
        e_out = float(np.sum(coeffs.dc ** 2) + np.sum(coeffs.flat_ac() ** 2))
        assert abs(e_in - e_out) < 1e-9 * e_in


def test_forward_accepts_substitute_values():
    # the g= argument feeds arbitrary per-node values through the same
    # weight geometry; using the level's own g must match the default
    rng = np.random.default_rng(41)
    cloud = random_cloud(rng, 300, 5)
    pyr = build_pyramid(cloud)
    child, parent = pyr.levels[0], pyr.levels[1]
    a = forward_scale(child, n_parents=parent.n_nodes)
    b = forward_scale(child, g=child.normalized(), n_parents=parent.n_nodes)
    assert np.array_equal(a.dc, b.dc)
    assert np.array_equal(a.flat_ac(), b.flat_ac())
