import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracext import Box, ContractViolation, DomainError, PointCloudSet
from fracext.geometry import builtin_geometry
from fracext.whitney import (
    DyadicCube,
    cube_box_distance,
    cube_neighbors,
    require_whitney,
    verify_whitney,
    whitney_decompose,
)


def _enumerate_1d(points, lo, hi, top, finest):
    """All dyadic intervals accepted by the top-down rule, found by exhaustive listing."""
    out = []
    for k in range(top, finest + 1):
        side = 2.0**-k
        for i in range(int(round(lo / side)), int(round(hi / side))):
            a, b = i * side, (i + 1) * side
            dist = min(max(a - x, x - b, 0.0) for x in points)
            if dist < side:
                continue
            parent_ok = True
            for up in range(1, k - top + 1):
                ps = 2.0**-(k - up)
                pi = i >> up
                pa, pb = pi * ps, (pi + 1) * ps
                if min(max(pa - x, x - pb, 0.0) for x in points) >= ps:
                    parent_ok = False
            if parent_ok:
                out.append((k, i))
    return sorted(out)


@pytest.mark.parametrize("points", [[0.0], [0.3], [-0.7, 0.2]])
def test_one_dimensional_decomposition_matches_enumeration(points):
    N = PointCloudSet(np.array(points)[:, None], 12)
    w = whitney_decompose(N, Box((-1,), (1,)), 8)
    got = sorted((int(k), int(i[0])) for k, i in zip(w.levels, w.indices))
    assert got == _enumerate_1d(points, -1.0, 1.0, w.coarsest_level, 8)


def test_single_point_interval_defect_is_the_collar():
    N = PointCloudSet(np.zeros((1, 1)), 12)
    w = whitney_decompose(N, Box((-1,), (1,)), 10)
    rep = verify_whitney(w)
    assert rep.disjointness
    assert rep.cover_defect_volume == pytest.approx(2 * 2.0**-10)
    assert rep.ratio_min == pytest.approx(1.0) and rep.ratio_max <= 4.0


def test_canonical_order_is_level_major_lexicographic():
    R = builtin_geometry("disk", 6)
    w = whitney_decompose(R.n_cloud, R.bbox, 6)
    keys = [(int(k), tuple(map(int, i))) for k, i in zip(w.levels, w.indices)]
    assert keys == sorted(keys)


def test_kdtree_distance_matches_brute_force():
    rng = np.random.default_rng(0)
    cloud = PointCloudSet(rng.uniform(-1, 1, size=(500, 2)), 8)
    levels = rng.integers(0, 6, 300)
    idx = np.array([rng.integers(-(2**k), 2**k, 2) for k in levels])
    got = cube_box_distance(levels, idx, cloud)
    side = 2.0 ** -levels.astype(float)
    lo = idx * side[:, None]
    hi = lo + side[:, None]
    gap = np.maximum(np.maximum(lo[:, None] - cloud.points[None], cloud.points[None] - hi[:, None]), 0)
    ref = np.sqrt((gap**2).sum(-1)).min(1)
    assert np.allclose(got, ref, rtol=0, atol=1e-14)


def test_neighbors_touch_and_include_self():
    R = builtin_geometry("halfplane", 5)
    w = whitney_decompose(R.n_cloud, R.bbox, 5)
    q = w.cubes[len(w) // 2]
    nb = cube_neighbors(w, q)
    assert q in nb
    for c in nb:
        a_lo, a_hi, b_lo, b_hi = q.lo, q.hi, c.lo, c.hi
        assert np.all(a_lo <= b_hi) and np.all(b_lo <= a_hi)
    with pytest.raises(DomainError):
        w.position(DyadicCube(40, (0, 0)))


def test_errors():
    with pytest.raises(DomainError):
        whitney_decompose(PointCloudSet(np.empty((0, 2)), 4), Box((-1, -1), (1, 1)), 4)
    with pytest.raises(DomainError):
        whitney_decompose(PointCloudSet(np.zeros((1, 2)), 4), Box((-1, -1), (1, 1)), -5)


def test_require_whitney_flags_a_broken_decomposition():
    R = builtin_geometry("halfplane", 5)
    w = whitney_decompose(R.n_cloud, R.bbox, 5)
    broken = type(w)(w.levels.copy(), w.indices.copy(), w.dist, w.generator, w.bbox,
                     w.coarsest_level, w.finest_level, w.dropped_indices)
    broken.levels[0] = broken.levels[1]
    broken.indices[0] = broken.indices[1]
    with pytest.raises(ContractViolation):
        require_whitney(broken)


def test_cube_geometry():
    q = DyadicCube(2, (1, -1))
    assert q.side == 0.25 and q.diam == pytest.approx(math.sqrt(2) / 4)
    assert np.allclose(q.center, [0.375, -0.125])
    assert q.parent() == DyadicCube(1, (0, -1))
    assert all(q.contains_cube(c) for c in q.children())
    assert not q.contains_cube(q.parent())


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=1, max_size=30),
       st.integers(3, 6))
def test_random_clouds_satisfy_whitney_invariants(pts, finest):
    N = PointCloudSet(np.array(pts), finest + 1)
    w = whitney_decompose(N, Box((-2, -2), (2, 2)), finest)
    rep = verify_whitney(w)
    assert rep.disjointness
    assert rep.ratio_min >= 1.0 and rep.ratio_max <= 4.0
    # everything missing is the collar of finest cubes that were never accepted
    collar = len(w.dropped_indices) * 4.0**-finest
    assert rep.cover_defect_volume == pytest.approx(collar, abs=1e-12)
