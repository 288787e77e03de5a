from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sponge_iso.lattice import LatticeError
from sponge_iso.sponge import (GeometryError, build_sponge, build_triangle_carpet, central_subtriangle,
                               obstacle_counts, obstacle_registry, tri_norm_sq, triangle_children)


def test_level_one_ring():
    S = build_sponge([3], 1, d=2)
    assert S.occupied_count == 8
    assert S.measure == F(8, 9)
    assert not S.bitmap()[1, 1]


def test_mixed_sequence_counts():
    S = build_sponge([3, 5, 7], d=2)
    assert S.occupied_count == 8 * 24 * 48 == int(S.bitmap().sum())
    assert S.measure == F(9216, 11025) == S.product_measure()


def test_three_dim_counts():
    S = build_sponge([3, 3], d=3)
    assert S.occupied_count == 676 == int(S.bitmap().sum())


def test_full_geometry_allows_two():
    S = build_sponge([2, 2, 2], geometry="full", d=3)
    assert S.occupied_count == 512 and S.measure == 1
    with pytest.raises(LatticeError):
        build_sponge([2], d=2)


@given(st.lists(st.sampled_from([3, 5, 7]), min_size=1, max_size=3), st.integers(2, 3))
def test_bitmap_matches_oracle(n, d):
    if d == 3 and len(n) > 2:
        n = n[:2]
    S = build_sponge(n, d=d)
    occ = S.bitmap()
    rng = np.random.default_rng(len(n))
    for _ in range(40):
        cell = tuple(int(v) for v in rng.integers(0, S.side, size=d))
        assert occ[cell] == S.occupied(cell)
    assert S.measure == S.product_measure()


def test_obstacle_registry_counts():
    S = build_sponge([3, 5], d=2)
    assert obstacle_counts(S) == [1, 8]
    reg = obstacle_registry(S)
    assert reg[0].region.lo == (F(1, 3), F(1, 3))
    assert all(R.region.volume == F(1, 225) for R in reg if R.level == 2)


def test_triangle_central_child():
    assert tri_norm_sq(F(1), F(0)) == 1
    assert len(triangle_children(5)) == 25
    for n in (5, 7, 9, 11):
        a, b, up = triangle_children(n)[central_subtriangle(n)]
        assert not up
    T = build_triangle_carpet([5, 7])
    assert T.occupied_count == 24 * 48
    with pytest.raises(LatticeError):
        build_triangle_carpet([3])


def test_triangle_obstacle_distance_from_boundary():
    T = build_triangle_carpet([5], 1)
    (R,) = obstacle_registry(T)
    # every vertex keeps barycentric distance 1/5 from the root edges
    assert min(min(1 - a - b, a, b) for a, b in R.vertices) == F(1, 5)


def test_triangle_is_planar():
    with pytest.raises(GeometryError):
        build_sponge([5], geometry="triangle", d=3)
