"""Pre-sponge construction: central-cube removal, plain lattices, triangle carpets."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Iterator, Sequence

import numpy as np

from .lattice import (
    BoxRegion,
    LatticeError,
    ResolutionSeq,
    ScaleLadder,
    lattice_box,
    scale_ladder,
)

GEOMETRIES = ("cube", "full", "triangle")


class GeometryError(ValueError):
    """Operation not defined for this sponge geometry or dimension."""


# Triangle children live in the affine frame of their parent: a point
# (a, b) means P0 + a*(P1 - P0) + b*(P2 - P0). Squared Euclidean length of
# a*e1 + b*e2 in an equilateral triangle of side 1 is a^2 + a*b + b^2.

def tri_norm_sq(a: Fraction, b: Fraction) -> Fraction:
    return a * a + a * b + b * b


def triangle_children(n: int) -> list[tuple[int, int, bool]]:
    """Local child order: upward (i, j) lexicographic, then downward."""
    up = [(i, j, True) for i in range(n) for j in range(n - i)]
    down = [(i, j, False) for i in range(n - 1) for j in range(n - 1 - i)]
    return up + down


def child_vertices(n: int, child: tuple[int, int, bool]) -> tuple[tuple[Fraction, Fraction], ...]:
    i, j, up = child
    pts = [(i, j), (i + 1, j), (i, j + 1)] if up else [(i + 1, j), (i, j + 1), (i + 1, j + 1)]
    return tuple((Fraction(a, n), Fraction(b, n)) for a, b in pts)


def _barycentric(p: tuple[Fraction, Fraction]) -> tuple[Fraction, Fraction, Fraction]:
    a, b = p
    return (1 - a - b, a, b)


def central_subtriangle(n: int) -> int:
    """Index of the removed child: the downward child whose barycenter is
    nearest the parent's, ties broken by lexicographic barycentric coordinates.
    Raises if that child touches the parent boundary (n = 3)."""
    third = Fraction(1, 3)
    best_key, best_idx = None, None
    for idx, child in enumerate(triangle_children(n)):
        if child[2]:
            continue
        verts = child_vertices(n, child)
        bc = (sum(v[0] for v in verts) / 3, sum(v[1] for v in verts) / 3)
        key = (tri_norm_sq(bc[0] - third, bc[1] - third), _barycentric(bc))
        if best_key is None or key < best_key:
            best_key, best_idx = key, idx
    verts = child_vertices(n, triangle_children(n)[best_idx])
    if min(min(_barycentric(v)) for v in verts) <= 0:
        raise LatticeError(f"n={n}: the central subtriangle touches its parent's boundary")
    return best_idx


@dataclass(frozen=True)
class ObstacleBox:
    """A removed central piece. ``region`` is a BoxRegion for cube geometry;
    for triangles ``vertices`` holds the affine-frame corners instead."""

    level: int
    parent: tuple[int, ...]
    region: BoxRegion | None = None
    vertices: tuple[tuple[Fraction, Fraction], ...] | None = None

    def to_json(self) -> dict:
        out = {"level": self.level, "parent": list(self.parent)}
        if self.region is not None:
            out["region"] = self.region.to_json()
        if self.vertices is not None:
            out["vertices"] = [[str(a), str(b)] for a, b in self.vertices]
        return out


@dataclass(frozen=True)
class SpongeLevel:
    """Level-k pre-sponge. Immutable; derived arrays are cached read-only."""

    seq: ResolutionSeq
    k: int
    geometry: str = "cube"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise GeometryError(f"unknown geometry {self.geometry!r}")
        if not 0 <= self.k <= len(self.seq):
            raise LatticeError(f"level {self.k} exceeds the sequence length {len(self.seq)}")
        used = self.seq.truncate(self.k)
        if self.geometry == "cube":
            used.require_odd(3)
        elif self.geometry == "triangle":
            if self.seq.d != 2:
                raise GeometryError("triangle carpets are planar (d = 2)")
            used.require_odd(5)

    # -- basic shape -----------------------------------------------------
    @property
    def d(self) -> int:
        return self.seq.d

    @property
    def n(self) -> tuple[int, ...]:
        return self.seq.entries[: self.k]

    @cached_property
    def ladder(self) -> ScaleLadder:
        return scale_ladder(self.seq.truncate(self.k))

    @property
    def side(self) -> int:
        """Cells per axis (cube lattices) or per edge (triangles)."""
        return math.prod(self.n)

    @property
    def has_holes(self) -> bool:
        return self.geometry != "full"

    @property
    def shape(self) -> tuple[int, ...]:
        if self.geometry == "triangle":
            return (math.prod(n * n for n in self.n),)
        return (self.side,) * self.d

    @property
    def num_cells(self) -> int:
        return math.prod(self.shape)

    @property
    def cell_volume(self) -> Fraction:
        """Cell measure; triangles are normalized to a root triangle of area 1."""
        return Fraction(1, self.num_cells)

    def pieces(self, j: int) -> int:
        """Children per parent at level j."""
        nj = self.n[j - 1]
        return nj * nj if self.geometry == "triangle" else nj ** self.d

    @property
    def occupied_count(self) -> int:
        kept = 1
        for j in range(1, self.k + 1):
            kept *= self.pieces(j) - (1 if self.has_holes else 0)
        return kept

    @property
    def measure(self) -> Fraction:
        return self.occupied_count * self.cell_volume

    def product_measure(self) -> Fraction:
        """The closed form prod_j (1 - n_j^-d) (or n_j^-2 for triangles)."""
        out = Fraction(1)
        if self.has_holes:
            for j in range(1, self.k + 1):
                out *= 1 - Fraction(1, self.pieces(j))
        return out

    def truncated(self, k: int) -> "SpongeLevel":
        return SpongeLevel(self.seq, k, self.geometry)

    def tree_levels(self) -> tuple[tuple[int, bool], ...]:
        """Per-level (n_j, central piece removed) used by the descent evaluators."""
        return tuple((nj, self.has_holes) for nj in self.n)

    # -- membership ------------------------------------------------------
    def digits(self, cell: Sequence[int]) -> list[tuple[int, ...]]:
        if self.geometry == "triangle":
            (t,) = cell
            out = []
            for j in range(self.k, 0, -1):
                p = self.pieces(j)
                out.append((t % p,))
                t //= p
            return out[::-1]
        out = []
        rest = list(cell)
        for nj in reversed(self.n):
            out.append(tuple(c % nj for c in rest))
            rest = [c // nj for c in rest]
        return out[::-1]

    def _central(self, j: int) -> tuple[int, ...]:
        nj = self.n[j - 1]
        if self.geometry == "triangle":
            return (central_subtriangle(nj),)
        return ((nj - 1) // 2,) * self.d

    def occupied(self, cell: Sequence[int]) -> bool:
        """Implicit oracle: O(k*d) digit test, no materialization."""
        cell = tuple(int(c) for c in cell)
        if len(cell) != len(self.shape) or any(not 0 <= c < s for c, s in zip(cell, self.shape)):
            raise LatticeError(f"cell {cell} outside the level-{self.k} lattice")
        if not self.has_holes:
            return True
        return all(dig != self._central(j) for j, dig in enumerate(self.digits(cell), start=1))

    def bitmap(self) -> np.ndarray:
        """Materialized occupancy; C-order over lattice coordinates (cubes)
        or digit order over triangle indices."""
        if "bitmap" not in self._cache:
            if self.geometry == "triangle":
                occ = np.ones(1, dtype=bool)
                for j in range(1, self.k + 1):
                    pat = np.ones(self.pieces(j), dtype=bool)
                    pat[self._central(j)[0]] = False
                    occ = np.kron(occ, pat).astype(bool)
            else:
                occ = np.ones((1,) * self.d, dtype=np.uint8)
                for j in range(1, self.k + 1):
                    nj = self.n[j - 1]
                    pat = np.ones((nj,) * self.d, dtype=np.uint8)
                    if self.has_holes:
                        pat[self._central(j)] = 0
                    occ = np.kron(occ, pat)
                occ = occ.astype(bool)
            occ.setflags(write=False)
            self._cache["bitmap"] = occ
        return self._cache["bitmap"]

    def iter_occupied(self) -> Iterator[tuple[int, ...]]:
        """Occupied cells in lattice order, generated from digits (no bitmap)."""
        if self.geometry == "triangle":
            for t in range(self.shape[0]):
                if self.occupied((t,)):
                    yield (t,)
            return
        for cell in product(*(range(s) for s in self.shape)):
            if self.occupied(cell):
                yield cell

    # -- geometry of cells ---------------------------------------------
    def cell_box(self, cell: Sequence[int]) -> BoxRegion:
        if self.geometry == "triangle":
            raise GeometryError("triangle cells are not boxes; use triangle_cell_vertices")
        return lattice_box(cell, self.side)

    def triangle_cell_vertices(self, index: int) -> tuple[tuple[Fraction, Fraction], ...]:
        if self.geometry != "triangle":
            raise GeometryError("not a triangle carpet")
        verts = ((Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
        for j, (t,) in enumerate(self.digits((index,)), start=1):
            nj = self.n[j - 1]
            verts = _map_child(verts, child_vertices(nj, triangle_children(nj)[t]))
        return verts

    def to_json(self) -> dict:
        return {"d": self.d, "n": list(self.n), "k": self.k, "geometry": self.geometry}


def _map_child(parent, local):
    (x0, y0), (x1, y1), (x2, y2) = parent
    return tuple((x0 + a * (x1 - x0) + b * (x2 - x0), y0 + a * (y1 - y0) + b * (y2 - y0))
                 for a, b in local)


def _as_seq(n, d: int | None) -> ResolutionSeq:
    if isinstance(n, ResolutionSeq):
        if d is not None and d != n.d:
            raise LatticeError("dimension disagrees with the resolution sequence")
        return n
    if d is None:
        raise LatticeError("dimension d is required when n is a plain sequence")
    return ResolutionSeq(d, tuple(n))


def build_sponge(n, k: int | None = None, geometry: str = "cube", d: int | None = None) -> SpongeLevel:
    """Level-k pre-sponge. ``n`` is a ResolutionSeq, or a list with ``d`` given."""
    seq = _as_seq(n, d)
    if geometry == "triangle":
        return build_triangle_carpet(seq, k)
    if geometry not in ("cube", "full"):
        raise GeometryError(f"unknown geometry {geometry!r}")
    return SpongeLevel(seq, len(seq) if k is None else k, geometry)


def build_triangle_carpet(n, k: int | None = None) -> SpongeLevel:
    seq = _as_seq(n, 2) if not isinstance(n, ResolutionSeq) else n
    if seq.d != 2:
        raise GeometryError("triangle carpets are planar (d = 2)")
    return SpongeLevel(seq, len(seq) if k is None else k, "triangle")


def obstacle_registry(S: SpongeLevel) -> list[ObstacleBox]:
    """One entry per removed central piece, ordered by level then parent."""
    out: list[ObstacleBox] = []
    if not S.has_holes:
        return out
    for j in range(1, S.k + 1):
        parent_level = S.truncated(j - 1)
        nj = S.n[j - 1]
        if S.geometry == "triangle":
            local = child_vertices(nj, triangle_children(nj)[central_subtriangle(nj)])
            for (t,) in parent_level.iter_occupied():
                pv = parent_level.triangle_cell_vertices(t) if j > 1 else (
                    (Fraction(0), Fraction(0)), (Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)))
                out.append(ObstacleBox(j, (t,), vertices=_map_child(pv, local)))
            continue
        s_prev, s_j = S.ladder[j - 1], S.ladder[j]
        m = (nj - 1) // 2
        occ = parent_level.bitmap()
        for parent in zip(*np.nonzero(occ)) if j > 1 else [(0,) * S.d]:
            parent = tuple(int(p) for p in parent)
            lo = tuple(p * s_prev + m * s_j for p in parent)
            out.append(ObstacleBox(j, parent, region=BoxRegion(lo, tuple(v + s_j for v in lo))))
    return out


def obstacle_counts(S: SpongeLevel) -> list[int]:
    """Closed-form obstacles per level: prod_{i<j} (pieces_i - 1)."""
    if not S.has_holes:
        return [0] * S.k
    counts, kept = [], 1
    for j in range(1, S.k + 1):
        counts.append(kept)
        kept *= S.pieces(j) - 1
    return counts
