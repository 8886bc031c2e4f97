"""Sum-pooling pyramid: mass conservation, parent/child bookkeeping."""

import numpy as np
import pytest

from rahtcodec.morton import morton_encode
from rahtcodec.pyramid import build_pyramid, children_of

from conftest import random_cloud


def test_every_level_conserves_mass():
    rng = np.random.default_rng(20)
    for _ in range(10):
        cloud = random_cloud(rng, 400, 6)
        pyr = build_pyramid(cloud)
        total_a = cloud.attributes.sum(axis=0)
        for level in pyr.levels:
            assert np.allclose(level.A.sum(axis=0), total_a, rtol=1e-12)
            assert level.w.sum() == cloud.n_points
            assert np.all(level.w >= 1)


def test_root_is_single_node():
    rng = np.random.default_rng(21)
    cloud = random_cloud(rng, 300, 5)
    pyr = build_pyramid(cloud)
    assert len(pyr.levels) == 6
    top = pyr.levels[-1]
    assert top.n_nodes == 1
    assert top.w[0] == cloud.n_points
    assert np.allclose(top.A[0], cloud.attributes.sum(axis=0))


def test_parent_codes_are_child_codes_shifted():
    rng = np.random.default_rng(22)
    cloud = random_cloud(rng, 500, 7)
    pyr = build_pyramid(cloud)
    for child, parent in zip(pyr.levels, pyr.levels[1:]):
        mapped = parent.codes[child.parent_index]
        assert np.array_equal(mapped, child.codes >> np.uint64(3))
        if cloud.depth - parent.scale >= 1:
            recoded = morton_encode(parent.positions, cloud.depth - parent.scale)
            assert np.array_equal(recoded, parent.codes)


def test_child_ranges_partition_children():
    rng = np.random.default_rng(23)
    cloud = random_cloud(rng, 600, 6)
    pyr = build_pyramid(cloud)
    for child, parent in zip(pyr.levels, pyr.levels[1:]):
        spans = parent.child_range
        assert spans[0, 0] == 0 and spans[-1, 1] == child.n_nodes
        assert np.array_equal(spans[1:, 0], spans[:-1, 1])
        # each parent's A is exactly the sum over its span
        for i in range(parent.n_nodes):
            s, e = spans[i]
            assert np.allclose(parent.A[i], child.A[s:e].sum(axis=0))
            assert parent.w[i] == child.w[s:e].sum()
            assert 1 <= e - s <= 8


def test_children_of_helper():
    rng = np.random.default_rng(24)
    cloud = random_cloud(rng, 200, 5)
    pyr = build_pyramid(cloud)
    child, parent = pyr.levels[0], pyr.levels[1]
    for i in range(parent.n_nodes):
        idx, offsets = children_of(parent, child, i)
        assert np.all(child.parent_index[idx] == i)
        assert np.all(child.codes[idx] >> np.uint64(3) == parent.codes[i])
        assert np.array_equal(offsets, child.positions[idx] & 1)


def test_averages_and_normalized():
    rng = np.random.default_rng(25)
    cloud = random_cloud(rng, 300, 5)
    pyr = build_pyramid(cloud)
    lvl = pyr.levels[2]
    assert np.allclose(lvl.averages() * lvl.w[:, None], lvl.A)
    assert np.allclose(lvl.normalized() * np.sqrt(lvl.w)[:, None], lvl.A)


def test_constant_attributes_average_exactly():
    # integer-valued constant fields survive pooling without rounding error
    rng = np.random.default_rng(26)
    cloud = random_cloud(rng, 500, 6)
    cloud = cloud.with_attributes(np.full((cloud.n_points, 3), 97.0))
    pyr = build_pyramid(cloud)
    for level in pyr.levels:
        assert np.all(level.averages() == 97.0)


def test_scales_argument_bounds():
    rng = np.random.default_rng(27)
    cloud = random_cloud(rng, 100, 4)
    assert len(build_pyramid(cloud, scales=2).levels) == 3
    with pytest.raises(ValueError):
        build_pyramid(cloud, scales=0)
    with pytest.raises(ValueError):
        build_pyramid(cloud, scales=5)
