"""Exact measures on pre-sponges and the density quantities built on them.

Box, slice and l-infinity ball queries are exact. They descend the n-adic
tree, and a subtree is priced in closed form once the query covers it.
Every occupied cell at a given level has the same subtree, so results are
memoized on (remaining levels, query box relative to the cell). l2 balls
get certified lower/upper bounds from adaptive subdivision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import Iterable, Sequence

from .lattice import (
    BallSpec,
    BoxRegion,
    LatticeError,
    as_fraction,
    axis_overlaps,
    weighted_sum,
)
from .sponge import GeometryError, SpongeLevel
from .voxels import BitmapVoxelSet, VoxelSet

Levels = tuple[tuple[int, bool], ...]


class MeasureError(ValueError):
    pass


class PreconditionError(ValueError):
    """A documented precondition of the operation does not hold."""


class RefinementError(RuntimeError):
    """Adaptive refinement hit its depth cap before reaching the tolerance."""

    def __init__(self, message: str, bounds: "MeasureBounds"):
        super().__init__(message)
        self.bounds = bounds


@dataclass(frozen=True)
class MeasureBounds:
    lower: Fraction
    upper: Fraction
    depth: int = 0

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    @property
    def value(self) -> Fraction:
        if not self.exact:
            raise MeasureError("only bounds are known for this measure")
        return self.lower


@dataclass(frozen=True)
class HalfSpace:
    """``{x : x[axis] < offset} ∩ S`` for a sponge S."""

    sponge: SpongeLevel
    axis: int
    offset: Fraction

    def __post_init__(self):
        object.__setattr__(self, "offset", as_fraction(self.offset))
        if not 0 <= self.axis < self.sponge.d:
            raise LatticeError(f"axis {self.axis} out of range")

    def box(self) -> BoxRegion:
        d = self.sponge.d
        hi = [Fraction(1)] * d
        hi[self.axis] = min(max(self.offset, Fraction(0)), Fraction(1))
        return BoxRegion((Fraction(0),) * d, tuple(hi))

    def to_json(self) -> dict:
        return {"type": "halfspace", "axis": self.axis, "offset": str(self.offset)}


def _require_lattice(S: SpongeLevel) -> None:
    if S.geometry == "triangle":
        raise GeometryError("box and ball measures are implemented for cube lattices only")


def full_fraction(levels: Levels, dim: int) -> Fraction:
    out = Fraction(1)
    for n, hole in levels:
        if hole:
            out *= 1 - Fraction(1, n ** dim)
    return out


@lru_cache(maxsize=1 << 17)
def _tree_measure(levels: Levels, box: tuple[tuple[Fraction, Fraction], ...]) -> Fraction:
    """Measure of ``box`` (relative to the unit cell) inside the carpet
    described by ``levels``; ``box`` is already clipped to the unit cube."""
    dim = len(box)
    if all(lo == 0 and hi == 1 for lo, hi in box):
        return full_fraction(levels, dim)
    if not levels:
        return math.prod((hi - lo for lo, hi in box), start=Fraction(1))
    (n, hole), rest = levels[0], levels[1:]
    m = (n - 1) // 2
    tokens = []
    for lo, hi in box:
        toks, full = [], []
        for t in range(math.floor(lo * n), math.ceil(hi * n)):
            a, b = max(lo * n - t, Fraction(0)), min(hi * n - t, Fraction(1))
            if b <= a:
                continue
            if a == 0 and b == 1:
                full.append(t)
            else:
                toks.append(((a, b), 1, t == m))
        if full:
            toks.append(((Fraction(0), Fraction(1)), len(full), m in full))
        if not toks:
            return Fraction(0)
        tokens.append(toks)
    total = Fraction(0)
    for combo in product(*tokens):
        mult = math.prod(c[1] for c in combo)
        if hole and all(c[2] for c in combo):
            mult -= 1
        if mult:
            total += mult * _tree_measure(rest, tuple(c[0] for c in combo))
    return total / n ** dim


def _clip_unit(box: BoxRegion) -> tuple[tuple[Fraction, Fraction], ...] | None:
    out = []
    for lo, hi in zip(box.lo, box.hi):
        lo, hi = max(lo, Fraction(0)), min(hi, Fraction(1))
        if hi <= lo:
            return None
        out.append((lo, hi))
    return tuple(out)


def region_measure(S: SpongeLevel, region: BoxRegion) -> MeasureBounds:
    """Exact ``λ(region ∩ S)``."""
    _require_lattice(S)
    if region.dim != S.d:
        raise LatticeError("region dimension does not match the sponge")
    clipped = _clip_unit(region)
    value = Fraction(0) if clipped is None else _tree_measure(S.tree_levels(), clipped)
    return MeasureBounds(value, value, S.k)


def slice_measure(S: SpongeLevel, axis: int, offset, window: BoxRegion | None = None) -> Fraction:
    """Exact ``H_{d-1}({x_axis = offset} ∩ S ∩ window)``; ``window`` is a
    (d-1)-box over the remaining axes (default: all of it)."""
    _require_lattice(S)
    c = as_fraction(offset)
    if not 0 <= c <= 1:
        return Fraction(0)
    if window is None:
        window = BoxRegion.unit(S.d - 1)
    clipped = _clip_unit(window)
    if clipped is None:
        return Fraction(0)
    # Along the descent the hyperplane sits at relative offset t in a column
    # of children. Inside a column the cross-section is a (d-1)-dim carpet
    # whose center is removed only in the central column. On a column
    # boundary every position has an occupied neighbour whose face lies
    # wholly in S, so the cross-section is full from there on.
    flags = []
    t = c
    for n, hole in S.tree_levels():
        if (t * n).denominator == 1:
            break
        u = math.floor(t * n)
        flags.append((n, hole and u == (n - 1) // 2))
        t = t * n - u
    return _tree_measure(tuple(flags), clipped)


# -- l2 balls ---------------------------------------------------------------

def _l2_bounds(S: SpongeLevel, ball: BallSpec, frontier, tol, depth, max_depth) -> MeasureBounds:
    d = S.d
    q = math.lcm(*(x.denominator for x in ball.center))
    P = [int(x * q) for x in ball.center]
    rn, rd = ball.radius.numerator, ball.radius.denominator
    levels = S.tree_levels()
    k = S.k
    lower = Fraction(0)
    # node: (level, den, corner)
    rounds = 0
    while True:
        straddle, straddle_mass = [], Fraction(0)
        for lvl, den, corner in frontier:
            lim = (rn * q * den) ** 2
            gmin = gmax = 0
            for c, p in zip(corner, P):
                a, b = c * q - p * den, (c + 1) * q - p * den
                g = a if a > 0 else (-b if b < 0 else 0)
                gmin += g * g
                G = max(abs(a), abs(b))
                gmax += G * G
            gmin *= rd * rd
            gmax *= rd * rd
            if gmin >= lim:
                continue
            mass = Fraction(1, den ** d)
            if lvl < k:
                mass *= full_fraction(levels[lvl:], d)
            if gmax <= lim:
                lower += mass
            else:
                straddle.append((lvl, den, corner))
                straddle_mass += mass
        upper = lower + straddle_mass
        done = (depth is not None and rounds >= depth) or (depth is None and upper - lower <= tol)
        if done or not straddle:
            return MeasureBounds(lower, upper, rounds)
        if rounds >= max_depth:
            raise RefinementError(f"l2 refinement stopped at depth {rounds} with gap {float(upper - lower):.3g}",
                                  MeasureBounds(lower, upper, rounds))
        nxt = []
        for lvl, den, corner in straddle:
            if lvl < k:
                n, hole = levels[lvl]
                m = (n - 1) // 2
                for t in product(range(n), repeat=d):
                    if hole and all(v == m for v in t):
                        continue
                    nxt.append((lvl + 1, den * n, tuple(c * n + v for c, v in zip(corner, t))))
            else:
                for t in product((0, 1), repeat=d):
                    nxt.append((lvl + 1, den * 2, tuple(c * 2 + v for c, v in zip(corner, t))))
        frontier = nxt
        rounds += 1


def ball_measure(S: SpongeLevel, ball: BallSpec, tol=None, *, depth: int | None = None,
                 within: VoxelSet | None = None, max_depth: int = 48) -> MeasureBounds:
    """``μ(B)`` (or ``μ(B ∩ within)``). Exact for linf; for l2 refine until
    ``upper - lower <= tol`` or for exactly ``depth`` rounds."""
    _require_lattice(S)
    if ball.dim != S.d:
        raise LatticeError("ball dimension does not match the sponge")
    if ball.norm == "linf":
        if within is None:
            return region_measure(S, ball.box())
        v = mask_measure_in_box(within.to_mask(), S.side, ball.box())
        return MeasureBounds(v, v, S.k)
    if depth is None:
        if tol is None or as_fraction(tol) <= 0:
            raise MeasureError("l2 balls need a positive tolerance or an explicit depth")
        tol = as_fraction(tol)
    if within is None:
        frontier = [(0, 1, (0,) * S.d)]
    else:
        frontier = [(S.k, S.side, c) for c in within.cells()]
    return _l2_bounds(S, ball, frontier, tol, depth, max_depth)


def mask_measure_in_box(mask, side: int, box: BoxRegion) -> Fraction:
    """Exact Lebesgue measure of (union of marked lattice cells) ∩ box."""
    weights = [axis_overlaps(side, lo, hi) for lo, hi in zip(box.lo, box.hi)]
    return weighted_sum(mask, weights)


# -- density quantity -------------------------------------------------------

@dataclass(frozen=True)
class ThetaValue:
    lower: Fraction
    upper: Fraction

    @property
    def exact(self) -> bool:
        return self.lower == self.upper

    @property
    def value(self) -> Fraction:
        if not self.exact:
            raise MeasureError("theta is only bracketed for this ball")
        return self.lower


SetLike = VoxelSet | HalfSpace


def set_measure_in_box(E: SetLike, box: BoxRegion) -> Fraction:
    if isinstance(E, HalfSpace):
        inter = box.intersect(E.box())
        return Fraction(0) if inter is None else region_measure(E.sponge, inter).value
    return mask_measure_in_box(E.to_mask(), E.sponge.side, box)


def theta(E: SetLike, F, tol=None) -> ThetaValue:
    """``min(μ(E∩F), μ(F∖E)) / μ(F)`` for a voxel set or ball ``F``."""
    S = E.sponge
    if isinstance(F, VoxelSet):
        if F.sponge != S:
            raise LatticeError("E and F live on different sponges")
        muF = F.measure()
        if isinstance(E, HalfSpace):
            a = set_measure_in_box(F, E.box()) if muF else Fraction(0)
        else:
            a = (E.to_mask() & F.to_mask()).sum() * S.cell_volume
    elif isinstance(F, BallSpec) and F.norm == "linf":
        muF = region_measure(S, F.box()).value
        a = set_measure_in_box(E, F.box()) if muF else Fraction(0)
    elif isinstance(F, BallSpec):
        if isinstance(E, HalfSpace):
            raise GeometryError("l2 balls need a voxel set E")
        inside = ball_measure(S, F, tol, within=E)
        rest = ball_measure(S, F, tol, within=_complement(E))
        if inside.upper + rest.upper == 0:
            raise MeasureError("μ(F) = 0")
        lo = min(inside.lower, rest.lower) / (inside.upper + rest.upper)
        hi = min(inside.upper, rest.upper) / (inside.lower + rest.lower) if inside.lower + rest.lower else Fraction(1, 2)
        return ThetaValue(lo, min(hi, Fraction(1, 2)))
    else:
        raise TypeError(f"unsupported reference set {F!r}")
    if muF == 0:
        raise MeasureError("μ(F) = 0")
    v = min(Fraction(a), muF - a) / muF
    return ThetaValue(v, v)


def _complement(E: VoxelSet) -> VoxelSet:
    return BitmapVoxelSet(E.sponge, E.sponge.bitmap() & ~E.to_mask())


# -- Ahlfors regularity -----------------------------------------------------

@dataclass(frozen=True)
class AhlforsEstimate:
    c_min: Fraction
    c_max: Fraction
    samples: int
    norm: str
    argmin: tuple = field(default=())
    argmax: tuple = field(default=())

    @property
    def constant(self) -> Fraction:
        """Smallest C with 1/C <= ratio <= C over the sample."""
        return max(self.c_max, 1 / self.c_min, Fraction(1))


def occupied_centers(S: SpongeLevel, stride: int = 1) -> list[tuple[Fraction, ...]]:
    """Centers of occupied level-k cells whose coordinates are multiples of ``stride``."""
    return [tuple(Fraction(2 * c + 1, 2 * S.side) for c in cell) for cell in _stride_cells(S, stride)]


def _stride_cells(S: SpongeLevel, stride: int):
    occ = S.bitmap()
    view = occ[tuple(slice(None, None, stride) for _ in range(S.d))]
    for idx in zip(*view.nonzero()):
        yield tuple(int(i) * stride for i in idx)


def ahlfors_estimate(S: SpongeLevel, centers: Sequence[Sequence], radii: Sequence,
                     norm: str = "linf", tol=Fraction(1, 10 ** 4)) -> AhlforsEstimate:
    """min/max of ``μ(B(x, r)) / r^d`` over all center/radius pairs."""
    if not centers or not radii:
        raise MeasureError("empty Ahlfors sample")
    diam = 1 if norm == "linf" else math.sqrt(S.d)
    lo_best = hi_best = None
    count = 0
    for x in centers:
        for r in radii:
            r = as_fraction(r)
            if not 0 < r <= diam:
                raise PreconditionError(f"radius {r} outside (0, diam]")
            mb = ball_measure(S, BallSpec(tuple(x), r, norm), tol)
            lo, hi = mb.lower / r ** S.d, mb.upper / r ** S.d
            if lo_best is None or lo < lo_best[0]:
                lo_best = (lo, (tuple(x), r))
            if hi_best is None or hi > hi_best[0]:
                hi_best = (hi, (tuple(x), r))
            count += 1
    return AhlforsEstimate(lo_best[0], hi_best[0], count, norm, lo_best[1], hi_best[1])


# -- good scales --------------------------------------------------------------

@dataclass(frozen=True)
class GoodScaleResult:
    status: str  # "ok" | "no-crossing" | "doubling-violated"
    radius: Fraction | None
    density: Fraction | None
    index: int | None
    scan: tuple[tuple[Fraction, Fraction], ...]
    doubling_ratio: Fraction | None = None


def _stationary_radius(x: Sequence[Fraction], side: int) -> Fraction:
    """Below this radius the cell pattern seen by B(x, t) no longer changes."""
    best = Fraction(1, side)
    for v in x:
        f = v * side - math.floor(v * side)
        if f:
            best = min(best, min(f, 1 - f) / side)
    return best


def density(E: SetLike, x: Sequence[Fraction], t: Fraction) -> tuple[Fraction, Fraction]:
    ball = BallSpec(tuple(x), t, "linf")
    mu = region_measure(E.sponge, ball.box()).value
    return set_measure_in_box(E, ball.box()), mu


def good_scale_search(E: SetLike, x: Sequence, R, b, D) -> GoodScaleResult:
    """Halving scan R_j = 2^-j R for a radius with density in [b/D, b]."""
    x = tuple(as_fraction(v) for v in x)
    R, b, D = as_fraction(R), as_fraction(b), as_fraction(D)
    if not 0 < b <= 1:
        raise PreconditionError("b must lie in (0, 1]")
    if D < 1:
        raise PreconditionError("a doubling constant is at least 1")
    S = E.sponge
    if not S.occupied(tuple(min(int(v * S.side), S.side - 1) for v in x)):
        raise PreconditionError(f"x = {x} is not in an occupied cell")
    stop = _stationary_radius(x, S.side)
    scan, t = [], R
    while True:
        num, mu = density(E, x, t)
        scan.append((t, num / mu))
        if t <= stop:
            break
        t /= 2
    if scan[0][1] > b:
        raise PreconditionError(f"density {scan[0][1]} at R exceeds b = {b}")
    h_inf = scan[-1][1]
    if h_inf <= b:
        if scan[0][1] >= b / D:
            return GoodScaleResult("ok", R, scan[0][1], 0, tuple(scan))
        return GoodScaleResult("no-crossing", None, None, None, tuple(scan))
    K = max(j for j, (_, h) in enumerate(scan) if h <= b)
    r, h = scan[K]
    if h >= b / D:
        return GoodScaleResult("ok", r, h, K, tuple(scan))
    big = density(E, x, r)[1]
    small = density(E, x, r / 2)[1]
    return GoodScaleResult("doubling-violated", r, h, K, tuple(scan), big / small)


# -- ball relocation ----------------------------------------------------------

@dataclass(frozen=True)
class RelocationResult:
    found: bool
    center: tuple[Fraction, ...] | None
    radius: Fraction
    theta: Fraction | None
    threshold: Fraction
    examined: int


def relocate_ball(E: SetLike, ball: BallSpec, eta, D, trial_scale=None, *, A=1,
                  variant: str = "local", L=None, radius=None, stride: int = 1,
                  min_boundary_distance=None) -> RelocationResult:
    """Search lattice centers for y with a large Θ(E, B(y, s r)).

    ``variant="local"``: candidates in B(x, 4 A r), trial radius
    ``trial_scale * r``, threshold ``eta / (2 D^2)``.
    ``variant="global"``: candidates anywhere in S, trial radius
    ``radius``, threshold ``eta / L``.
    """
    if ball.norm != "linf":
        raise GeometryError("relocation search uses exact linf balls")
    S = E.sponge
    eta, D = as_fraction(eta), as_fraction(D)
    th0 = theta(E, ball).value
    if th0 < eta:
        raise PreconditionError(f"Θ(E, B) = {th0} < η = {eta}")
    if variant == "local":
        r1 = as_fraction(trial_scale) * ball.radius
        threshold = eta / (2 * D * D)
        reach = ball.dilate(4 * as_fraction(A))
    elif variant == "global":
        if L is None or radius is None:
            raise PreconditionError("the global variant needs L and the target radius")
        r1 = as_fraction(radius)
        threshold = eta / as_fraction(L)
        reach = None
    else:
        raise ValueError(f"unknown variant {variant!r}")
    cands = [ball.center] + occupied_centers(S, stride)
    if reach is not None:
        cands = [y for y in cands if reach.contains_point(y)]
    if min_boundary_distance is not None:
        md = as_fraction(min_boundary_distance)
        cands = [y for y in cands if min(min(v, 1 - v) for v in y) >= md]
    cands.sort(key=lambda y: (max(abs(a - c) for a, c in zip(y, ball.center)), y))
    examined = 0
    for y in cands:
        examined += 1
        trial = BallSpec(y, r1, "linf")
        if region_measure(S, trial.box()).value == 0:
            continue
        th = theta(E, trial).value
        if th >= threshold:
            return RelocationResult(True, tuple(y), r1, th, threshold, examined)
    return RelocationResult(False, None, r1, None, threshold, examined)
