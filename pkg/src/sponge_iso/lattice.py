"""Exact rational geometry on n-adic lattices.

Everything here works on ``fractions.Fraction``. The unit domain is
``[0, 1]^d``; a level-k cell is a closed cube of side ``s_k`` addressed
either by its digit expansion (one d-tuple per level) or by integer
lattice coordinates in ``range(M_k)^d`` with ``M_k = n_1 * ... * n_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterable, Sequence

import numpy as np

Number = int | Fraction


class LatticeError(ValueError):
    """Invalid lattice input (bad sequence, digit out of range, level mismatch)."""


def as_fraction(x) -> Fraction:
    """Coerce ints, Fractions, "p/q" strings and floats to an exact Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (bool, np.bool_)):
        raise TypeError("booleans are not rationals")
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        # repr round-trips, so 0.1 -> 1/10 rather than the binary expansion
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot interpret {x!r} as a rational")


def fraction_str(x: Fraction) -> str:
    x = Fraction(x)
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def exact_sqrt(x: Fraction) -> Fraction | None:
    """Return sqrt(x) if it is rational, else None."""
    x = Fraction(x)
    if x < 0:
        return None
    p, q = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if p * p == x.numerator and q * q == x.denominator:
        return Fraction(p, q)
    return None


@dataclass(frozen=True)
class ResolutionSeq:
    d: int
    entries: tuple[int, ...] = ()

    def __post_init__(self):
        if not isinstance(self.d, int) or self.d < 2:
            raise LatticeError(f"dimension must be an integer >= 2, got {self.d!r}")
        entries = tuple(self.entries)
        for n in entries:
            if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 2:
                raise LatticeError(f"subdivision ratios must be integers >= 2, got {n!r}")
        object.__setattr__(self, "entries", tuple(int(n) for n in entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def truncate(self, k: int) -> "ResolutionSeq":
        if k < 0 or k > len(self.entries):
            raise LatticeError(f"level {k} outside 0..{len(self.entries)}")
        return ResolutionSeq(self.d, self.entries[:k])

    def require_odd(self, minimum: int = 3) -> None:
        for i, n in enumerate(self.entries, start=1):
            if n < minimum or n % 2 == 0:
                raise LatticeError(
                    f"n_{i} = {n}: central-removal geometry needs odd ratios >= {minimum}"
                )


@dataclass(frozen=True)
class ScaleLadder:
    scales: tuple[Fraction, ...]

    def __post_init__(self):
        if not self.scales or self.scales[0] != 1:
            raise LatticeError("a scale ladder starts at s_0 = 1")

    def __getitem__(self, k: int) -> Fraction:
        return self.scales[k]

    def __len__(self) -> int:
        return len(self.scales)

    def ratio(self, j: int) -> int:
        """n_j recovered from consecutive scales."""
        r = self.scales[j - 1] / self.scales[j]
        if r.denominator != 1:
            raise LatticeError("ladder is not n-adic")
        return r.numerator


def scale_ladder(n: ResolutionSeq) -> ScaleLadder:
    scales = [Fraction(1)]
    for nj in n.entries:
        scales.append(scales[-1] / nj)
    return ScaleLadder(tuple(scales))


@dataclass(frozen=True)
class CellAddress:
    digits: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(tuple(int(v) for v in t) for t in self.digits))

    @property
    def level(self) -> int:
        return len(self.digits)


def address_to_cell(addr: CellAddress, ratios: Sequence[int]) -> tuple[int, ...]:
    """Digit expansion -> integer lattice coordinates at level ``addr.level``."""
    if addr.level > len(ratios):
        raise LatticeError("address longer than the resolution sequence")
    if not addr.digits:
        return ()
    d = len(addr.digits[0])
    coords = [0] * d
    for j, digit in enumerate(addr.digits):
        nj = ratios[j]
        if len(digit) != d:
            raise LatticeError("inconsistent digit tuple length")
        for a, v in enumerate(digit):
            if not 0 <= v < nj:
                raise LatticeError(f"digit {v} out of range at level {j + 1} (n={nj})")
            coords[a] = coords[a] * nj + v
    return tuple(coords)


def cell_to_address(cell: Sequence[int], ratios: Sequence[int]) -> CellAddress:
    k = len(ratios)
    digits = []
    rest = [int(c) for c in cell]
    for j in range(k - 1, -1, -1):
        nj = ratios[j]
        digits.append(tuple(c % nj for c in rest))
        rest = [c // nj for c in rest]
    if any(rest):
        raise LatticeError(f"cell {tuple(cell)} outside the level-{k} lattice")
    return CellAddress(tuple(reversed(digits)))


@dataclass(frozen=True)
class BoxRegion:
    lo: tuple[Fraction, ...]
    hi: tuple[Fraction, ...]

    def __post_init__(self):
        lo = tuple(as_fraction(v) for v in self.lo)
        hi = tuple(as_fraction(v) for v in self.hi)
        if len(lo) != len(hi):
            raise LatticeError("lo/hi dimension mismatch")
        if any(a > b for a, b in zip(lo, hi)):
            raise LatticeError(f"inverted interval in box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, d: int) -> "BoxRegion":
        return cls((Fraction(0),) * d, (Fraction(1),) * d)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def sides(self) -> tuple[Fraction, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> Fraction:
        v = Fraction(1)
        for s in self.sides:
            v *= s
        return v

    @property
    def diameter_sq(self) -> Fraction:
        return sum((s * s for s in self.sides), Fraction(0))

    def is_degenerate(self) -> bool:
        return any(s == 0 for s in self.sides)

    def intersect(self, other: "BoxRegion") -> "BoxRegion | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return BoxRegion(lo, hi)

    def interiors_overlap(self, other: "BoxRegion") -> bool:
        return all(max(a, c) < min(b, e) for a, b, c, e in zip(self.lo, self.hi, other.lo, other.hi))

    def contains_box(self, other: "BoxRegion") -> bool:
        return all(a <= c and e <= b for a, b, c, e in zip(self.lo, self.hi, other.lo, other.hi))

    def gap_sq(self, other: "BoxRegion") -> Fraction:
        """Squared Euclidean distance between the two closed boxes."""
        total = Fraction(0)
        for a, b, c, e in zip(self.lo, self.hi, other.lo, other.hi):
            g = max(c - b, a - e, Fraction(0))
            total += g * g
        return total

    def project_out(self, axis: int) -> "BoxRegion":
        return BoxRegion(self.lo[:axis] + self.lo[axis + 1:], self.hi[:axis] + self.hi[axis + 1:])

    def scaled(self, factor, offset: Sequence | None = None) -> "BoxRegion":
        f = as_fraction(factor)
        off = tuple(as_fraction(o) for o in offset) if offset is not None else (Fraction(0),) * self.dim
        return BoxRegion(tuple(a * f + o for a, o in zip(self.lo, off)),
                         tuple(b * f + o for b, o in zip(self.hi, off)))

    def to_json(self) -> dict:
        return {"lo": [fraction_str(v) for v in self.lo], "hi": [fraction_str(v) for v in self.hi]}


NORMS = ("linf", "l2")


@dataclass(frozen=True)
class BallSpec:
    """Open metric ball; ``linf`` balls are cubes of side ``2 * radius``."""

    center: tuple[Fraction, ...]
    radius: Fraction
    norm: str = "linf"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(as_fraction(v) for v in self.center))
        object.__setattr__(self, "radius", as_fraction(self.radius))
        if self.radius <= 0:
            raise LatticeError("ball radius must be positive")
        if self.norm not in NORMS:
            raise LatticeError(f"unknown norm {self.norm!r}")

    @property
    def dim(self) -> int:
        return len(self.center)

    def box(self) -> BoxRegion:
        """The ball itself for ``linf``; the bounding cube for ``l2``."""
        r = self.radius
        return BoxRegion(tuple(c - r for c in self.center), tuple(c + r for c in self.center))

    def dilate(self, factor) -> "BallSpec":
        return BallSpec(self.center, self.radius * as_fraction(factor), self.norm)

    def contains_point(self, x: Sequence) -> bool:
        x = [as_fraction(v) for v in x]
        if self.norm == "linf":
            return all(abs(a - c) < self.radius for a, c in zip(x, self.center))
        return sum((a - c) ** 2 for a, c in zip(x, self.center)) < self.radius ** 2

    def to_json(self) -> dict:
        return {"center": [fraction_str(v) for v in self.center],
                "radius": fraction_str(self.radius), "norm": self.norm}


def cell_region(addr: CellAddress, ladder: ScaleLadder) -> BoxRegion:
    if addr.level >= len(ladder):
        raise LatticeError(f"address of length {addr.level} exceeds ladder depth {len(ladder) - 1}")
    if not addr.digits:
        raise LatticeError("cell_region needs at least one digit tuple; level 0 is the unit cube")
    d = len(addr.digits[0])
    lo = [Fraction(0)] * d
    for j, digit in enumerate(addr.digits, start=1):
        nj = ladder.ratio(j)
        for a, v in enumerate(digit):
            if not 0 <= v < nj:
                raise LatticeError(f"digit {v} out of range at level {j} (n={nj})")
            lo[a] += v * ladder[j]
    side = ladder[addr.level]
    return BoxRegion(tuple(lo), tuple(v + side for v in lo))


def lattice_box(cell: Sequence[int], m: int) -> BoxRegion:
    """Closed cube of the level lattice with ``m`` cells per axis."""
    return BoxRegion(tuple(Fraction(c, m) for c in cell), tuple(Fraction(c + 1, m) for c in cell))


def axis_overlaps(m: int, lo: Fraction, hi: Fraction) -> list[Fraction]:
    """Lengths of ``[c/m, (c+1)/m] ∩ [lo, hi]`` for ``c`` in ``range(m)``."""
    out = []
    for c in range(m):
        a = max(Fraction(c, m), lo)
        b = min(Fraction(c + 1, m), hi)
        out.append(b - a if b > a else Fraction(0))
    return out


def weighted_sum(mask: np.ndarray, weights: Sequence[Sequence[Fraction]]) -> Fraction:
    """Exact ``sum_c mask[c] * prod_a weights[a][c_a]`` for a boolean grid.

    Each axis is rescaled to integers over its own common denominator so the
    contraction runs in int64 when that cannot overflow.
    """
    if mask.ndim != len(weights):
        raise LatticeError("weight vectors do not match the grid dimension")
    ints, denom = [], 1
    for w in weights:
        den = math.lcm(*(Fraction(v).denominator for v in w)) if len(w) else 1
        ints.append([int(Fraction(v) * den) for v in w])
        denom *= den
    bound = int(mask.sum()) if mask.size else 0
    for w in ints:
        bound *= max((abs(v) for v in w), default=0)
    dtype = np.int64 if bound < 2 ** 62 else object
    acc = mask.astype(dtype if dtype is np.int64 else object)
    for w in reversed(ints):
        acc = acc @ np.asarray(w, dtype=dtype)
    return Fraction(int(acc), denom)


def union_volume(boxes: Iterable[tuple[Sequence[Fraction], Sequence[Fraction]]]) -> Fraction:
    """Exact Lebesgue measure of a finite union of closed axis-aligned boxes."""
    boxes = [(tuple(lo), tuple(hi)) for lo, hi in boxes
             if all(a < b for a, b in zip(lo, hi))]
    if not boxes:
        return Fraction(0)
    if len(boxes[0][0]) == 1:
        ivs = sorted((lo[0], hi[0]) for lo, hi in boxes)
        total, cur_a, cur_b = Fraction(0), ivs[0][0], ivs[0][1]
        for a, b in ivs[1:]:
            if a > cur_b:
                total += cur_b - cur_a
                cur_a, cur_b = a, b
            elif b > cur_b:
                cur_b = b
        return total + (cur_b - cur_a)
    cuts = sorted({lo[0] for lo, _ in boxes} | {hi[0] for _, hi in boxes})
    total = Fraction(0)
    for a, b in zip(cuts, cuts[1:]):
        active = [(lo[1:], hi[1:]) for lo, hi in boxes if lo[0] <= a and b <= hi[0]]
        if active:
            total += (b - a) * union_volume(active)
    return total


def grid_points(shape: Sequence[int]) -> Iterable[tuple[int, ...]]:
    return product(*(range(s) for s in shape))
