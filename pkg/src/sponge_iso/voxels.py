"""Lattice-representable subsets of a pre-sponge.

Two backends share one interface: ``BitmapVoxelSet`` (materialized boolean
grid) and ``PredicateVoxelSet`` (membership computed per cell, never
materialized unless asked).
"""
from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .lattice import LatticeError
from .sponge import SpongeLevel

SET_OPS = ("union", "intersect", "diff", "complement")


class VoxelSet:
    sponge: SpongeLevel

    def contains(self, cell: Sequence[int]) -> bool:
        raise NotImplementedError

    def to_mask(self) -> np.ndarray:
        raise NotImplementedError

    def count(self) -> int:
        return int(self.to_mask().sum())

    @property
    def level(self) -> int:
        return self.sponge.k

    def measure(self) -> Fraction:
        return self.count() * self.sponge.cell_volume

    def cells(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in c) for c in zip(*np.nonzero(self.to_mask()))]

    def union(self, other: "VoxelSet") -> "VoxelSet":
        return set_algebra(self, other, "union")

    def intersect(self, other: "VoxelSet") -> "VoxelSet":
        return set_algebra(self, other, "intersect")

    def diff(self, other: "VoxelSet") -> "VoxelSet":
        return set_algebra(self, other, "diff")

    def complement(self) -> "VoxelSet":
        return set_algebra(self, None, "complement")

    def __eq__(self, other):
        if not isinstance(other, VoxelSet):
            return NotImplemented
        return self.sponge == other.sponge and np.array_equal(self.to_mask(), other.to_mask())

    __hash__ = None


class BitmapVoxelSet(VoxelSet):
    def __init__(self, sponge: SpongeLevel, mask: np.ndarray):
        mask = np.array(mask, dtype=bool)
        if mask.shape != sponge.shape:
            raise LatticeError(f"mask shape {mask.shape} != lattice shape {sponge.shape}")
        if np.any(mask & ~sponge.bitmap()):
            raise LatticeError("voxel set contains unoccupied cells")
        mask.setflags(write=False)
        self.sponge = sponge
        self._mask = mask

    def contains(self, cell) -> bool:
        return bool(self._mask[tuple(cell)])

    def to_mask(self) -> np.ndarray:
        return self._mask

    def __repr__(self):
        return f"BitmapVoxelSet(level={self.level}, count={self.count()})"


class PredicateVoxelSet(VoxelSet):
    """Membership = predicate(cell) and the cell is occupied."""

    def __init__(self, sponge: SpongeLevel, predicate: Callable[[tuple[int, ...]], bool]):
        self.sponge = sponge
        self._pred = predicate

    def contains(self, cell) -> bool:
        cell = tuple(int(c) for c in cell)
        return self.sponge.occupied(cell) and bool(self._pred(cell))

    def to_mask(self) -> np.ndarray:
        mask = np.zeros(self.sponge.shape, dtype=bool)
        for cell in self.sponge.iter_occupied():
            if self._pred(cell):
                mask[cell] = True
        return mask

    def count(self) -> int:
        return sum(1 for c in self.sponge.iter_occupied() if self._pred(c))

    def __repr__(self):
        return f"PredicateVoxelSet(level={self.level})"


def set_algebra(A: VoxelSet, B: VoxelSet | None, op: str) -> VoxelSet:
    if op not in SET_OPS:
        raise LatticeError(f"unknown set operation {op!r}")
    S = A.sponge
    if op != "complement":
        if B is None:
            raise LatticeError(f"{op} needs two operands")
        if B.sponge != S:
            raise LatticeError("operands live on different sponges or levels")
    both_bitmap = isinstance(A, BitmapVoxelSet) and (B is None or isinstance(B, BitmapVoxelSet))
    if both_bitmap:
        a = A.to_mask()
        occ = S.bitmap()
        if op == "complement":
            return BitmapVoxelSet(S, occ & ~a)
        b = B.to_mask()
        res = {"union": a | b, "intersect": a & b, "diff": a & ~b}[op]
        return BitmapVoxelSet(S, res)
    if op == "complement":
        return PredicateVoxelSet(S, lambda c: not A.contains(c))
    if op == "union":
        return PredicateVoxelSet(S, lambda c: A.contains(c) or B.contains(c))
    if op == "intersect":
        return PredicateVoxelSet(S, lambda c: A.contains(c) and B.contains(c))
    return PredicateVoxelSet(S, lambda c: A.contains(c) and not B.contains(c))


# -- constructors ---------------------------------------------------------

def empty_set(S: SpongeLevel) -> BitmapVoxelSet:
    return BitmapVoxelSet(S, np.zeros(S.shape, dtype=bool))


def full_set(S: SpongeLevel) -> BitmapVoxelSet:
    return BitmapVoxelSet(S, S.bitmap())


def from_cells(S: SpongeLevel, cells: Iterable[Sequence[int]]) -> BitmapVoxelSet:
    mask = np.zeros(S.shape, dtype=bool)
    for c in cells:
        mask[tuple(int(v) for v in c)] = True
    return BitmapVoxelSet(S, mask & S.bitmap())


def axis_cut(S: SpongeLevel, axis: int, index: int) -> BitmapVoxelSet:
    """Occupied cells whose ``axis`` coordinate is below ``index``."""
    idx = np.arange(S.side).reshape([-1 if a == axis else 1 for a in range(S.d)])
    return BitmapVoxelSet(S, (idx < index) & S.bitmap())


def box_cells(S: SpongeLevel, lo: Sequence[int], hi: Sequence[int]) -> BitmapVoxelSet:
    """Occupied cells with ``lo <= coord < hi`` on every axis."""
    mask = np.zeros(S.shape, dtype=bool)
    mask[tuple(slice(a, b) for a, b in zip(lo, hi))] = True
    return BitmapVoxelSet(S, mask & S.bitmap())


def random_set(S: SpongeLevel, rng: np.random.Generator, p: float = 0.5) -> BitmapVoxelSet:
    return BitmapVoxelSet(S, (rng.random(S.shape) < p) & S.bitmap())
