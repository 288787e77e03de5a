from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sponge_iso.lattice import (BallSpec, BoxRegion, CellAddress, LatticeError, ResolutionSeq, address_to_cell,
                                as_fraction, axis_overlaps, cell_region, cell_to_address, exact_sqrt,
                                fraction_str, scale_ladder, union_volume, weighted_sum)


def test_resolution_seq_validation():
    assert ResolutionSeq(2, (3, 5)).truncate(1).entries == (3,)
    with pytest.raises(LatticeError):
        ResolutionSeq(1, (3,))
    with pytest.raises(LatticeError):
        ResolutionSeq(2, (1,))
    with pytest.raises(LatticeError):
        ResolutionSeq(2, (4,)).require_odd(3)


def test_scale_ladder_values():
    lad = scale_ladder(ResolutionSeq(2, (3, 5, 7)))
    assert [lad[j] for j in range(4)] == [1, F(1, 3), F(1, 15), F(1, 105)]
    assert lad.ratio(2) == 5


def test_fraction_helpers():
    assert as_fraction("1/3") == F(1, 3)
    assert as_fraction(0.5) == F(1, 2)
    assert fraction_str(F(4, 2)) == "2"
    assert exact_sqrt(F(9, 4)) == F(3, 2)
    assert exact_sqrt(F(2)) is None


@given(st.lists(st.integers(0, 4), min_size=2, max_size=2), st.lists(st.integers(0, 2), min_size=2, max_size=2))
def test_address_round_trip(a, b):
    ratios = (5, 3)
    addr = CellAddress((tuple(a), tuple(b)))
    cell = address_to_cell(addr, ratios)
    assert cell_to_address(cell, ratios) == addr
    box = cell_region(addr, scale_ladder(ResolutionSeq(2, ratios)))
    assert box.lo == tuple(F(c, 15) for c in cell)


def test_box_operations():
    a = BoxRegion((F(0), F(0)), (F(1, 2), F(1)))
    b = BoxRegion((F(1, 4), F(1, 2)), (F(1), F(1)))
    assert a.intersect(b) == BoxRegion((F(1, 4), F(1, 2)), (F(1, 2), F(1)))
    assert a.volume == F(1, 2)
    assert a.interiors_overlap(b)
    assert a.gap_sq(BoxRegion((F(3, 4), F(0)), (F(1), F(1)))) == F(1, 16)


def test_ball_contains_and_dilate():
    ball = BallSpec((F(1, 2), F(1, 2)), F(1, 4))
    assert ball.contains_point((F(1, 2), F(3, 4) - F(1, 100)))
    assert not ball.contains_point((F(1, 2), F(3, 4)))
    assert ball.dilate(2).radius == F(1, 2)
    with pytest.raises(LatticeError):
        BallSpec((0, 0), 0)


@given(st.lists(st.tuples(st.fractions(0, 1, max_denominator=8), st.fractions(0, 1, max_denominator=8)),
                min_size=0, max_size=6))
def test_union_volume_matches_grid_count(raw):
    boxes = [((min(a, b),), (max(a, b),)) for a, b in raw]
    grid = np.zeros(840, dtype=bool)  # lcm(1..8) resolution is exact
    for (lo,), (hi,) in boxes:
        grid[int(lo * 840):int(hi * 840)] = True
    assert union_volume(boxes) == F(int(grid.sum()), 840)


def test_weighted_sum_exact():
    mask = np.array([[1, 0, 1], [0, 1, 0], [1, 0, 1]], dtype=bool)
    w = [axis_overlaps(3, F(1, 6), F(5, 6))] * 2
    assert weighted_sum(mask, w) == F(1, 36) * 4 + F(1, 9)
