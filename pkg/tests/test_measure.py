import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sponge_iso.lattice import BallSpec, BoxRegion
from sponge_iso.measure import (HalfSpace, MeasureError, PreconditionError, RefinementError, ahlfors_estimate,
                                ball_measure, density, good_scale_search, region_measure, relocate_ball,
                                slice_measure, theta)
from sponge_iso.sponge import build_sponge
from sponge_iso.voxels import BitmapVoxelSet, axis_cut, box_cells, empty_set, from_cells, full_set, random_set

RING = build_sponge([3], 1, d=2)
FULL3 = build_sponge([3], geometry="full", d=2)
FULL2 = build_sponge([2], geometry="full", d=2)


def box(lo, hi):
    return BoxRegion(tuple(F(v) for v in lo), tuple(F(v) for v in hi))


def test_region_examples():
    assert region_measure(FULL3, box((0, 0), (1, 1))).value == 1
    assert region_measure(RING, box(("1/3", "1/3"), ("2/3", "2/3"))).value == 0
    assert region_measure(RING, box(("1/6", "1/6"), ("5/6", "5/6"))).value == F(1, 3)


def brute_region(S, region):
    occ = S.bitmap()
    total = F(0)
    for cell in zip(*np.nonzero(occ)):
        inter = S.cell_box(cell).intersect(region)
        if inter is not None:
            total += inter.volume
    return total


fr = st.fractions(0, 1, max_denominator=12)


@given(fr, fr, fr, fr)
def test_region_matches_cell_sum(a, b, c, d):
    S = build_sponge([3, 3], d=2)
    region = box((min(a, b), min(c, d)), (max(a, b), max(c, d)))
    assert region_measure(S, region).value == brute_region(S, region)


@given(fr, fr, fr, fr, fr, fr)
def test_region_inclusion_exclusion(a, b, c, d, e, f):
    S = build_sponge([3, 5], d=2)
    r1 = box((min(a, b), 0), (max(a, b), 1))
    r2 = box((min(c, d), min(e, f)), (max(c, d), max(e, f)))
    m = lambda r: region_measure(S, r).value if r is not None else 0  # noqa: E731
    inter = r1.intersect(r2)
    # union of two boxes through inclusion-exclusion against a direct cell sum
    union = sum((S.cell_box(c).intersect(r1).volume if S.cell_box(c).intersect(r1) else 0)
                + (S.cell_box(c).intersect(r2).volume if S.cell_box(c).intersect(r2) else 0)
                - (S.cell_box(c).intersect(inter).volume if inter and S.cell_box(c).intersect(inter) else 0)
                for c in zip(*np.nonzero(S.bitmap())))
    assert m(r1) + m(r2) - m(inter) == union


def test_l2_balls_bracket_known_areas():
    disk = ball_measure(FULL3, BallSpec((F(1, 2), F(1, 2)), F(1, 2), "l2"), F(1, 1000))
    assert disk.lower <= math.pi / 4 <= disk.upper and disk.upper - disk.lower <= F(1, 1000)
    quarter = ball_measure(RING, BallSpec((0, 0), F(1, 3), "l2"), F(1, 10 ** 4))
    assert quarter.lower <= math.pi / 36 <= quarter.upper


def test_l2_depth_cap_reports_bounds():
    with pytest.raises(RefinementError) as info:
        ball_measure(FULL3, BallSpec((F(1, 2), F(1, 2)), F(1, 3), "l2"), F(1, 10 ** 12), max_depth=4)
    assert info.value.bounds.lower <= info.value.bounds.upper


def test_linf_ball_is_exact():
    b = ball_measure(RING, BallSpec((F(1, 2), F(1, 2)), F(1, 3)))
    assert b.exact and b.value == F(1, 3)


@given(st.fractions(F(1, 50), F(1, 2), max_denominator=50), st.fractions(F(1, 50), F(1, 2), max_denominator=50))
def test_l2_bounds_monotone_at_fixed_depth(r1, r2):
    lo, hi = sorted((r1, r2))
    S = build_sponge([3, 3], d=2)
    a = ball_measure(S, BallSpec((F(1, 3), F(1, 4)), lo, "l2"), depth=6)
    b = ball_measure(S, BallSpec((F(1, 3), F(1, 4)), hi, "l2"), depth=6)
    assert a.lower <= b.lower and a.upper <= b.upper


def test_slice_examples_and_power_law():
    assert slice_measure(FULL3, 0, F(1, 2)) == 1
    assert slice_measure(RING, 0, F(1, 2)) == F(2, 3)
    for k in range(1, 7):
        assert slice_measure(build_sponge([3] * k, d=2), 0, F(1, 2)) == F(2, 3) ** k


def face_count_slice(S, axis, c):
    """Independent oracle: cross-section length from the lattice cells the line crosses."""
    occ = S.bitmap()
    t = c * S.side
    layers = {min(math.floor(t), S.side - 1)}
    if t.denominator == 1 and t > 0:
        layers.add(int(t) - 1)
    hit = np.logical_or.reduce([np.take(occ, j, axis=axis) for j in layers])
    return F(int(hit.sum()), S.side ** (S.d - 1))


@given(st.fractions(0, 1, max_denominator=60), st.integers(0, 1))
def test_slice_matches_cell_oracle(c, axis):
    S = build_sponge([3, 5], d=2)
    assert slice_measure(S, axis, c) == face_count_slice(S, axis, c)


def test_theta_examples():
    E = axis_cut(FULL2, 0, 1)
    assert theta(E, full_set(FULL2)).value == F(1, 2)
    assert theta(E, E).value == 0
    rng = np.random.default_rng(3)
    for _ in range(20):
        R = random_set(FULL3, rng)
        c = R.count()
        assert theta(R, full_set(FULL3)).value == F(min(c, 9 - c), 9)
    with pytest.raises(MeasureError):
        theta(E, empty_set(FULL2))


@given(st.integers(0, 2 ** 20))
def test_theta_complement_symmetry(seed):
    S = build_sponge([3, 3], d=2)
    E = random_set(S, np.random.default_rng(seed))
    ball = BallSpec((F(1, 3), F(2, 3)), F(2, 9))
    assert theta(E, ball) == theta(E.complement(), ball)
    assert theta(E, ball).value <= F(1, 2)


def test_theta_l2_brackets():
    E = axis_cut(FULL2, 0, 1)
    t = theta(E, BallSpec((F(1, 2), F(1, 2)), F(1, 2), "l2"), F(1, 1000))
    assert t.lower <= F(1, 2) <= t.upper


def test_ahlfors_examples():
    est = ahlfors_estimate(FULL3, [(F(1, 2), F(1, 2))], [F(1, 6), F(1, 3)])
    assert est.c_min == est.c_max == 4
    corner = ahlfors_estimate(RING, [(F(0), F(0))], [F(1, 9), F(1, 3)])
    assert corner.c_min == corner.c_max == 1
    assert corner.c_max <= 4


def test_good_scale_everything_returns_R():
    E = full_set(FULL3)
    res = good_scale_search(E, (F(1, 2), F(1, 2)), F(1, 2), 1, 4)
    assert res.status == "ok" and res.radius == F(1, 2)


def test_good_scale_single_cell_crossing():
    S = build_sponge([3, 3, 3], geometry="full", d=2)
    E = from_cells(S, [(13, 13)])
    x = (F(27, 54), F(27, 54))
    res = good_scale_search(E, x, F(1, 2), F(1, 2), 4)
    assert res.status == "ok"
    num, mu = density(E, x, res.radius)
    assert F(1, 8) <= num / mu <= F(1, 2)
    # the crossing is the largest scan index with density <= b
    assert all(h > F(1, 2) for _, h in res.scan[res.index + 1:])


def test_good_scale_density_exactly_b():
    E = axis_cut(FULL2, 0, 1)
    res = good_scale_search(E, (F(1, 2), F(1, 2)), F(1, 2), F(1, 2), 4)
    assert res.radius == F(1, 2) and res.density == F(1, 2)


def test_good_scale_rejects_dense_start():
    with pytest.raises(PreconditionError):
        good_scale_search(full_set(FULL3), (F(1, 2), F(1, 2)), F(1, 2), F(1, 2), 4)


def test_relocation_examples():
    E = axis_cut(FULL2, 0, 1)
    ball = BallSpec((F(1, 2), F(1, 2)), F(1, 2))
    res = relocate_ball(E, ball, F(1, 2), 4, F(1, 2))
    assert res.found and res.center == ball.center and res.theta >= F(1, 2) / 32
    S = build_sponge([3, 3], geometry="full", d=2)
    corner = from_cells(S, [(0, 0)])
    big = BallSpec((F(1, 2), F(1, 2)), F(1, 2))
    eta = theta(corner, big).value
    res = relocate_ball(corner, big, eta, 4, F(1, 3), stride=1)
    assert res.found and max(res.center) < F(1, 3)
    with pytest.raises(PreconditionError):
        relocate_ball(corner, big, F(1, 2), 4, F(1, 2))


@given(st.integers(0, 2 ** 20), st.integers(0, 26), st.integers(0, 26), st.sampled_from([F(1, 2), F(1, 3), F(3, 4)]))
def test_good_scale_two_sided_bound(seed, i, j, b):
    S = build_sponge([3, 3, 3], d=2)
    if not S.occupied((i, j)):
        return
    E = random_set(S, np.random.default_rng(seed), 0.3)
    x = (F(2 * i + 1, 54), F(2 * j + 1, 54))
    R = F(1, 2)
    num, mu = density(E, x, R)
    if num / mu > b:
        return
    res = good_scale_search(E, x, R, b, 4)
    if res.status == "ok":
        num, mu = density(E, x, res.radius)
        assert b / 4 <= num / mu <= b
