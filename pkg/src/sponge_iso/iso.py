"""Lattice boundaries, shadows, isoperimetric witnesses and the 5B cover."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .lattice import BallSpec, BoxRegion, LatticeError, as_fraction, axis_overlaps, weighted_sum
from .measure import (HalfSpace, MeasureError, PreconditionError, ThetaValue, ball_measure,
                      slice_measure, theta)
from .sponge import GeometryError, SpongeLevel
from .voxels import BitmapVoxelSet, VoxelSet, axis_cut, random_set

BOUNDARY_MODES = ("interface", "ambient")


def _require_cubical(S: SpongeLevel) -> None:
    if S.geometry == "triangle":
        raise GeometryError("face sets are implemented for cube lattices only")


def _pad(mask: np.ndarray, axis: int) -> np.ndarray:
    width = [(1, 1) if a == axis else (0, 0) for a in range(mask.ndim)]
    return np.pad(mask, width, constant_values=False)


def _lower_upper(mask: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Cells on the two sides of every face plane along ``axis``."""
    p = _pad(mask, axis)
    n = p.shape[axis]
    lower = np.take(p, range(0, n - 1), axis=axis)
    upper = np.take(p, range(1, n), axis=axis)
    return lower, upper


@dataclass(frozen=True)
class FaceSet:
    """Codimension-one lattice faces at one level.

    ``planes[a]`` has length ``side + 1`` along axis ``a``; entry ``j`` marks
    the face at ``x_a = j/side`` between cells ``j - 1`` and ``j``.
    """

    sponge: SpongeLevel
    planes: tuple[np.ndarray, ...]
    mode: str = "interface"

    @property
    def level(self) -> int:
        return self.sponge.k

    @property
    def face_area(self) -> Fraction:
        return Fraction(1, self.sponge.side) ** (self.sponge.d - 1)

    def count(self) -> int:
        return int(sum(int(p.sum()) for p in self.planes))

    def axis_count(self, axis: int) -> int:
        return int(self.planes[axis].sum())

    @property
    def content(self) -> Fraction:
        return self.count() * self.face_area

    def hh_bounds(self, c_ar) -> tuple[Fraction, Fraction]:
        """Content with h(B) = μ(B)/r, bracketed through the Ahlfors constant."""
        c = as_fraction(c_ar)
        return self.content / c, self.content * c

    def content_in_box(self, box: BoxRegion) -> Fraction:
        """Face content inside the open box."""
        side = self.sponge.side
        total = Fraction(0)
        for a, plane in enumerate(self.planes):
            if not plane.any():
                continue
            weights = []
            for b in range(self.sponge.d):
                lo, hi = box.lo[b], box.hi[b]
                if b == a:
                    weights.append([Fraction(1) if lo < Fraction(j, side) < hi else Fraction(0)
                                    for j in range(side + 1)])
                else:
                    weights.append(axis_overlaps(side, lo, hi))
            total += weighted_sum(plane, weights)
        return total

    def faces(self) -> Iterator[tuple[tuple[int, ...], int]]:
        """(upper cell index, axis) for each face."""
        for a, plane in enumerate(self.planes):
            for idx in zip(*np.nonzero(plane)):
                yield tuple(int(v) for v in idx), a

    def __eq__(self, other):
        if not isinstance(other, FaceSet):
            return NotImplemented
        return self.sponge == other.sponge and all(
            np.array_equal(a, b) for a, b in zip(self.planes, other.planes))

    __hash__ = None


def relative_boundary(E: VoxelSet, mode: str = "interface") -> FaceSet:
    """Faces separating E from the rest.

    ``interface``: only faces between an E-cell and an occupied non-E cell.
    ``ambient``: every E-face whose other side is not in E (obstacles and
    the outside of the unit cube included).
    """
    if mode not in BOUNDARY_MODES:
        raise ValueError(f"unknown boundary mode {mode!r}")
    S = E.sponge
    _require_cubical(S)
    e = E.to_mask()
    occ = S.bitmap()
    planes = []
    for a in range(S.d):
        lo, hi = _lower_upper(e, a)
        flip = lo ^ hi
        if mode == "interface":
            olo, ohi = _lower_upper(occ, a)
            flip &= olo & ohi
        planes.append(flip)
    return FaceSet(S, tuple(planes), mode)


def halfspace_boundary_content(H: HalfSpace, box: BoxRegion) -> Fraction:
    """Content of the relative boundary of H inside an open box."""
    S = H.sponge
    c = H.offset
    if (c * S.side).denominator == 1:
        cut = axis_cut(S, H.axis, int(c * S.side))
        return relative_boundary(cut).content_in_box(box)
    if not box.lo[H.axis] < c < box.hi[H.axis]:
        return Fraction(0)
    window = box.project_out(H.axis)
    return slice_measure(S, H.axis, c, window)


# -- directional boundaries and shadows ---------------------------------------

def _aligned_range(box: BoxRegion, side: int) -> list[tuple[int, int]]:
    out = []
    for lo, hi in zip(box.lo, box.hi):
        a, b = lo * side, hi * side
        if a.denominator != 1 or b.denominator != 1:
            raise LatticeError("box is not aligned with the level lattice")
        if not 0 <= a <= b <= side:
            raise LatticeError("box leaves the unit cube")
        out.append((int(a), int(b)))
    return out


def directional_boundary(E: VoxelSet, Q: BoxRegion, axis: int, mode: str = "ambient") -> FaceSet:
    """Transition faces of E along lines parallel to ``axis`` inside Q."""
    S = E.sponge
    _require_cubical(S)
    rng = _aligned_range(Q, S.side)
    e = E.to_mask()
    sl = tuple(slice(a, b) for a, b in rng)
    sub = e[sl]
    if mode == "interface":
        occ = S.bitmap()[sl]
        valid = np.take(occ, range(0, sub.shape[axis] - 1), axis=axis) & np.take(occ, range(1, sub.shape[axis]), axis=axis)
    else:
        valid = True
    inner = (np.diff(sub.astype(np.int8), axis=axis) != 0) & valid
    planes = []
    for a in range(S.d):
        shape = [S.side + 1 if b == a else S.side for b in range(S.d)]
        plane = np.zeros(shape, dtype=bool)
        if a == axis:
            idx = tuple(slice(lo + 1, hi) if b == axis else slice(lo, hi) for b, (lo, hi) in enumerate(rng))
            plane[idx] = inner
        planes.append(plane)
    return FaceSet(S, tuple(planes), mode)


@dataclass(frozen=True)
class ShadowBitmap:
    axis: int
    bits: np.ndarray
    side: int

    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def content(self) -> Fraction:
        return self.count() * Fraction(1, self.side) ** self.bits.ndim


def shadow(F: FaceSet | VoxelSet, axis: int) -> ShadowBitmap:
    """OR along ``axis`` onto the hyperplane ``x_axis = 0``."""
    if isinstance(F, FaceSet):
        bits = F.planes[axis].any(axis=axis)
        side = F.sponge.side
    else:
        bits = F.to_mask().any(axis=axis)
        side = F.sponge.side
    return ShadowBitmap(axis, bits, side)


# -- the projection inequality -------------------------------------------------

@dataclass(frozen=True)
class ProjectionCheck:
    lhs: Fraction
    rhs: Fraction
    shadows: tuple[Fraction, ...]

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs


def projection_check_masks(masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized core over a batch of sets inside one box.

    ``masks`` has shape (batch, *box_shape). Returns integer numerators of
    lhs and rhs over the common denominator ``2 * N`` (N = cells in the box),
    so ``holds = lhs_num <= rhs_num``.
    """
    masks = np.asarray(masks, dtype=bool)
    shape = masks.shape[1:]
    d = len(shape)
    N = int(np.prod(shape))
    cnt = masks.reshape(len(masks), -1).sum(axis=1).astype(np.int64)
    lhs = 2 * np.minimum(cnt, N - cnt)
    rhs = np.zeros(len(masks), dtype=np.int64)
    for i in range(d):
        ax = i + 1
        if shape[i] < 2:
            continue
        trans = (np.diff(masks.astype(np.int8), axis=ax) != 0).any(axis=ax)
        rows = trans.reshape(len(masks), -1).sum(axis=1).astype(np.int64)
        # rows / (N / shape[i]) over 2N  ->  2 * rows * shape[i]
        rhs += 2 * d * rows * shape[i]
    return lhs, rhs


def projection_check(E: VoxelSet, Q: BoxRegion) -> ProjectionCheck:
    """Θ_λ(E, Q) against d * Σ_i |π_i(∂_{+,i}E ∩ Q)| / |π_i(Q)|, exactly."""
    S = E.sponge
    _require_cubical(S)
    if Q.is_degenerate():
        raise LatticeError("degenerate box")
    rng = _aligned_range(Q, S.side)
    sub = E.to_mask()[tuple(slice(a, b) for a, b in rng)]
    N = sub.size
    c = int(sub.sum())
    lhs = Fraction(min(c, N - c), N)
    shadows = []
    for i in range(S.d):
        if sub.shape[i] < 2:
            shadows.append(Fraction(0))
            continue
        rows = int((np.diff(sub.astype(np.int8), axis=i) != 0).any(axis=i).sum())
        shadows.append(Fraction(rows * sub.shape[i], N))
    return ProjectionCheck(lhs, S.d * sum(shadows), tuple(shadows))


# -- isoperimetric witnesses ---------------------------------------------------

@dataclass(frozen=True)
class IsoWitness:
    set_label: str
    ball: BallSpec
    theta: ThetaValue
    mu_inflated: Fraction
    content: Fraction
    inflation: Fraction
    mode: str

    @property
    def ratio(self) -> Fraction | None:
        """Θ μ(ΛB) / (r content): a lower bound for the isoperimetric constant."""
        if self.content == 0:
            return None
        return self.theta.lower * self.mu_inflated / (self.ball.radius * self.content)

    @property
    def cheeger(self) -> Fraction | None:
        """r content / (Θ μ(ΛB)), the quotient minimized by set searches."""
        if self.theta.lower == 0:
            return None
        return self.ball.radius * self.content / (self.theta.lower * self.mu_inflated)

    @property
    def violation(self) -> bool:
        """Positive Θ with no boundary in ΛB: no finite constant works."""
        return self.content == 0 and self.theta.upper > 0

    def to_json(self) -> dict:
        return {
            "set": self.set_label,
            "ball": self.ball.to_json(),
            "theta": [str(self.theta.lower), str(self.theta.upper)],
            "mu_inflated": str(self.mu_inflated),
            "content": str(self.content),
            "inflation": str(self.inflation),
            "mode": self.mode,
            "ratio": None if self.ratio is None else str(self.ratio),
            "violation": self.violation,
            "label": "level-k witness",
        }


def _label(E) -> str:
    if isinstance(E, HalfSpace):
        return f"halfspace(axis={E.axis}, offset={E.offset})"
    return f"voxels(count={E.count()})"


def iso_ratio(E: VoxelSet | HalfSpace, ball: BallSpec, inflation=1, mode: str = "interface") -> IsoWitness:
    S = E.sponge
    _require_cubical(S)
    if ball.norm != "linf":
        raise GeometryError("isoperimetric witnesses use linf balls")
    lam = as_fraction(inflation)
    if lam < 1:
        raise ValueError("inflation factor must be at least 1")
    big = ball.dilate(lam)
    mu_big = ball_measure(S, big).value
    if ball_measure(S, ball).value == 0:
        raise PreconditionError("μ(B) = 0")
    th = theta(E, ball)
    box = big.box()
    if isinstance(E, HalfSpace):
        if mode != "interface":
            raise GeometryError("half-space boundaries are computed in interface mode")
        content = halfspace_boundary_content(E, box)
    else:
        content = relative_boundary(E, mode).content_in_box(box)
    return IsoWitness(_label(E), ball, th, mu_big, content, lam, mode)


@dataclass
class TauScan:
    tau: Fraction
    estimate: Fraction
    witness: IsoWitness
    admissible: int
    sampled: int
    violations: list[IsoWitness] = field(default_factory=list)


Sampler = Callable[[], Iterable[tuple[VoxelSet | HalfSpace, BallSpec]]]


def domain_ball(S: SpongeLevel) -> BallSpec:
    return BallSpec((Fraction(1, 2),) * S.d, Fraction(1, 2), "linf")


def halfspace_family(S: SpongeLevel, balls: Sequence[BallSpec] | None = None):
    """Axis cuts at every lattice line and at the midpoint, in every ball."""
    balls = list(balls) if balls else [domain_ball(S)]
    offsets = sorted({Fraction(j, S.side) for j in range(1, S.side)} | {Fraction(1, 2)})
    for ball in balls:
        for axis in range(S.d):
            for c in offsets:
                yield HalfSpace(S, axis, c), ball


def random_family(S: SpongeLevel, rng: np.random.Generator, count: int,
                  balls: Sequence[BallSpec] | None = None, p: float = 0.5):
    balls = list(balls) if balls else [domain_ball(S)]
    for i in range(count):
        yield random_set(S, rng, p), balls[i % len(balls)]


def tau_iso_scan(S: SpongeLevel, tau, inflation=1, family: Iterable | None = None,
                 mode: str = "interface") -> TauScan:
    """Largest Θ μ(ΛB)/(r content) over sampled pairs with Θ ≥ τ."""
    tau = as_fraction(tau)
    if not 0 < tau <= Fraction(1, 2):
        raise ValueError("τ must lie in (0, 1/2]; Θ never exceeds 1/2")
    if family is None:
        family = halfspace_family(S)
    best, admissible, sampled, bad = None, 0, 0, []
    for E, ball in family:
        sampled += 1
        try:
            w = iso_ratio(E, ball, inflation, mode)
        except (PreconditionError, MeasureError):
            continue
        if w.theta.lower < tau:
            continue
        admissible += 1
        if w.violation:
            bad.append(w)
            continue
        if best is None or w.ratio > best.ratio:
            best = w
    if best is None:
        raise PreconditionError(f"no sampled pair has Θ ≥ {tau} and positive boundary content")
    return TauScan(tau, best.ratio, best, admissible, sampled, bad)


# -- 5B covering -----------------------------------------------------------------

def _open_balls_disjoint(a: BallSpec, b: BallSpec) -> bool:
    if a.norm == "linf":
        return any(abs(x - y) >= a.radius + b.radius for x, y in zip(a.center, b.center))
    dist_sq = sum((x - y) ** 2 for x, y in zip(a.center, b.center))
    return dist_sq >= (a.radius + b.radius) ** 2


@dataclass(frozen=True)
class CoverFamily:
    balls: tuple[BallSpec, ...]
    selected: tuple[int, ...]
    inflation: Fraction

    def check(self) -> bool:
        lam = self.inflation
        sel = [self.balls[i].dilate(lam) for i in self.selected]
        for i in range(len(sel)):
            for j in range(i + 1, len(sel)):
                if not _open_balls_disjoint(sel[i], sel[j]):
                    return False
        big = [self.balls[i].dilate(5 * lam) for i in self.selected]
        return all(any(B.contains_point(b.center) for B in big) for b in self.balls)


def cover_5B(balls: Sequence[BallSpec], inflation=1) -> CoverFamily:
    """Greedy by descending radius; keep a ball iff its dilate misses the kept ones."""
    lam = as_fraction(inflation)
    balls = tuple(balls)
    if len({b.norm for b in balls}) > 1:
        raise ValueError("all balls must use the same norm")
    if any(b.radius <= 0 for b in balls):
        raise ValueError("radii must be positive")
    order = sorted(range(len(balls)), key=lambda i: -balls[i].radius)
    chosen: list[int] = []
    for i in order:
        cand = balls[i].dilate(lam)
        if all(_open_balls_disjoint(cand, balls[j].dilate(lam)) for j in chosen):
            chosen.append(i)
    return CoverFamily(balls, tuple(chosen), lam)
