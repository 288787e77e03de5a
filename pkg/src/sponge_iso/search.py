"""Searches for sets with small boundary relative to their mass, and the
discrete Poincaré ratio of cell functions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .iso import IsoWitness, iso_ratio, relative_boundary
from .lattice import BallSpec, as_fraction, axis_overlaps, weighted_sum
from .measure import PreconditionError, ball_measure
from .sponge import GeometryError, SpongeLevel
from .voxels import BitmapVoxelSet, axis_cut, box_cells

EXHAUSTIVE_LIMIT = 20
SEED_FAMILIES = ("axis", "subcube", "random")


@dataclass(frozen=True)
class SearchConfig:
    families: tuple[str, ...] = SEED_FAMILIES
    random_seeds: int = 8
    budget: int = 500
    neighborhood: int = 64
    seed: int = 0
    mode: str = "interface"
    exhaustive_limit: int = EXHAUSTIVE_LIMIT

    def __post_init__(self):
        bad = set(self.families) - set(SEED_FAMILIES)
        if bad:
            raise ValueError(f"unknown seed families {sorted(bad)}")
        if self.budget < 0 or self.neighborhood < 1 or self.random_seeds < 0:
            raise ValueError("budget, neighborhood and random_seeds must be non-negative")


@dataclass
class SearchResult:
    witness: IsoWitness
    mask: np.ndarray
    cheeger: Fraction
    exact: bool
    evaluations: int
    trace: list[tuple[int, str, str]] = field(default_factory=list)

    def trace_rows(self) -> list[dict]:
        return [{"step": s, "move": m, "cheeger": c} for s, m, c in self.trace]


class _Evaluator:
    """Exact Cheeger quotient r * content / (Θ μ(ΛB)) of cell masks."""

    def __init__(self, S: SpongeLevel, ball: BallSpec, inflation: Fraction, mode: str):
        if ball.norm != "linf":
            raise GeometryError("set searches use linf balls")
        self.S, self.ball, self.mode = S, ball, mode
        self.big = ball.dilate(inflation)
        self.w_ball = [axis_overlaps(S.side, lo, hi) for lo, hi in zip(ball.box().lo, ball.box().hi)]
        self.mu_ball = ball_measure(S, ball).value
        self.mu_big = ball_measure(S, self.big).value
        if self.mu_ball == 0:
            raise PreconditionError("μ(B) = 0")
        self.occ = S.bitmap()

    def mass(self, mask: np.ndarray) -> Fraction:
        return weighted_sum(mask, self.w_ball)

    def content(self, mask: np.ndarray) -> Fraction:
        return relative_boundary(BitmapVoxelSet(self.S, mask), self.mode).content_in_box(self.big.box())

    def __call__(self, mask: np.ndarray) -> Fraction | None:
        a = self.mass(mask)
        m = min(a, self.mu_ball - a)
        if m == 0:
            return None
        theta = m / self.mu_ball
        return self.ball.radius * self.content(mask) / (theta * self.mu_big)


def _seeds(S: SpongeLevel, cfg: SearchConfig, rng: np.random.Generator):
    occ = S.bitmap()
    if "axis" in cfg.families:
        for axis in range(S.d):
            for j in range(1, S.side):
                yield f"axis-cut(axis={axis}, index={j})", axis_cut(S, axis, j).to_mask()
    if "subcube" in cfg.families:
        for level in range(1, max(S.k, 2)):
            width = S.side // round(1 / S.ladder[level])
            steps = S.side // width
            for corner in np.ndindex(*([steps] * S.d)):
                lo = [c * width for c in corner]
                mask = box_cells(S, lo, [v + width for v in lo]).to_mask()
                if mask.any():
                    yield f"subcube(level={level}, corner={corner})", mask
    if "random" in cfg.families:
        for i in range(cfg.random_seeds):
            p = rng.uniform(0.2, 0.8)
            yield f"random({i})", (rng.random(S.shape) < p) & occ


def _exhaustive(S: SpongeLevel, ev: _Evaluator) -> tuple[np.ndarray, Fraction, int]:
    cells = list(S.iter_occupied())
    n = len(cells)
    big = ev.big.box()
    # cell masses (scaled to integers) and face weights inside ΛB
    mass = [math.prod(ev.w_ball[a][c[a]] for a in range(S.d)) for c in cells]
    index = {c: i for i, c in enumerate(cells)}
    w_big = [axis_overlaps(S.side, lo, hi) for lo, hi in zip(big.lo, big.hi)]
    pairs, solo = [], []
    for i, c in enumerate(cells):
        for a in range(S.d):
            face = Fraction(1)
            for b in range(S.d):
                if b != a:
                    face *= w_big[b][c[b]]
            for step in (0, 1):
                pos = Fraction(c[a] + step, S.side)
                if face == 0 or not big.lo[a] < pos < big.hi[a]:
                    continue
                nb = list(c)
                nb[a] += 1 if step else -1
                j = index.get(tuple(nb))
                if j is not None:
                    if j > i:
                        pairs.append((i, j, face))
                elif ev.mode == "ambient":
                    solo.append((i, face))
    den = math.lcm(*(x.denominator for x in mass + [f for *_, f in pairs] + [f for _, f in solo] + [Fraction(1)]))
    m_int = np.array([int(x * den) for x in mass], dtype=np.int64)
    total = int(m_int.sum())
    best_key, best_bits, evals = None, None, 0
    chunk = 1 << min(n, 16)
    for start in range(0, 1 << n, chunk):
        codes = np.arange(start, start + chunk, dtype=np.int64)
        bits = ((codes[:, None] >> np.arange(n)) & 1).astype(bool)
        a = bits.astype(np.int64) @ m_int
        lo = np.minimum(a, total - a)
        cont = np.zeros(len(codes), dtype=np.int64)
        for i, j, f in pairs:
            cont += (bits[:, i] ^ bits[:, j]) * int(f * den)
        for i, f in solo:
            cont += bits[:, i] * int(f * den)
        evals += len(codes)
        ok = lo > 0
        if not ok.any():
            continue
        key = np.where(ok, cont / np.maximum(lo, 1), np.inf)
        order = np.flatnonzero(key <= key[ok].min() * (1 + 1e-12))
        for idx in order:
            cand = Fraction(int(cont[idx]), int(lo[idx]))
            if best_key is None or cand < best_key:
                best_key, best_bits = cand, bits[idx].copy()
    if best_bits is None:
        raise PreconditionError("no candidates: every subset has Θ = 0")
    mask = np.zeros(S.shape, dtype=bool)
    for c, bit in zip(cells, best_bits):
        mask[c] = bit
    return mask, ev(mask), evals


def minimize_iso_ratio(S: SpongeLevel, ball: BallSpec, inflation=1,
                       config: SearchConfig | None = None) -> SearchResult:
    """Smallest r * content / (Θ μ(ΛB)) found; exhaustive on small lattices."""
    cfg = config or SearchConfig()
    lam = as_fraction(inflation)
    ev = _Evaluator(S, ball, lam, cfg.mode)
    rng = np.random.default_rng(cfg.seed)
    trace: list[tuple[int, str, str]] = []
    if S.occupied_count <= cfg.exhaustive_limit:
        mask, q, evals = _exhaustive(S, ev)
        trace.append((0, "exhaustive", str(q)))
        w = iso_ratio(BitmapVoxelSet(S, mask), ball, lam, cfg.mode)
        return SearchResult(w, mask, q, True, evals, trace)

    best, best_mask, evals = None, None, 0
    for label, mask in _seeds(S, cfg, rng):
        q = ev(mask)
        evals += 1
        if q is None:
            continue
        if best is None or q < best:
            best, best_mask = q, mask.copy()
            trace.append((evals, f"seed {label}", str(q)))
    if best is None:
        raise PreconditionError("no candidates: every seed has Θ = 0")

    occ_cells = np.argwhere(ev.occ)
    spent = 0
    improved = True
    while improved and spent < cfg.budget:
        improved = False
        picks = rng.choice(len(occ_cells), size=min(cfg.neighborhood, len(occ_cells)), replace=False)
        for p in picks:
            if spent >= cfg.budget:
                break
            cell = tuple(int(v) for v in occ_cells[p])
            trial = best_mask.copy()
            trial[cell] = not trial[cell]
            q = ev(trial)
            spent += 1
            evals += 1
            if q is not None and q < best:
                best, best_mask, improved = q, trial, True
                trace.append((evals, f"flip {cell}", str(q)))
                break
    w = iso_ratio(BitmapVoxelSet(S, best_mask), ball, lam, cfg.mode)
    return SearchResult(w, best_mask, best, False, evals, trace)


# -- Poincaré ratio ---------------------------------------------------------------

@dataclass(frozen=True)
class PoincareSample:
    ball: BallSpec
    inflation: Fraction
    mean: Fraction
    lhs: Fraction
    rhs: Fraction
    gradient: dict

    @property
    def ratio(self) -> Fraction | float:
        if self.lhs == 0:
            return Fraction(0)
        if self.rhs == 0:
            return math.inf
        return self.lhs / self.rhs

    @property
    def flagged(self) -> bool:
        return self.rhs == 0 and self.lhs > 0


CellFunction = Callable[[tuple[int, ...]], object] | np.ndarray


def coordinate_function(S: SpongeLevel, axis: int) -> Callable[[tuple[int, ...]], Fraction]:
    """x_axis evaluated at cell centers."""
    return lambda c: Fraction(2 * c[axis] + 1, 2 * S.side)


def indicator_function(mask: np.ndarray) -> Callable[[tuple[int, ...]], Fraction]:
    return lambda c: Fraction(int(bool(mask[c])))


def poincare_ratio(S: SpongeLevel, f: CellFunction, ball: BallSpec, inflation=1) -> PoincareSample:
    """Mean oscillation of f on B against r times the mean discrete gradient on ΛB."""
    if S.geometry == "triangle":
        raise GeometryError("cell functions are implemented for cube lattices only")
    if ball.norm != "linf":
        raise GeometryError("Poincaré samples use linf balls")
    lam = as_fraction(inflation)
    value = (lambda c: as_fraction(f[c])) if isinstance(f, np.ndarray) else (lambda c: as_fraction(f(c)))
    occ = S.bitmap()
    big = ball.dilate(lam)

    def overlaps(b: BallSpec) -> dict:
        w = [axis_overlaps(S.side, lo, hi) for lo, hi in zip(b.box().lo, b.box().hi)]
        ranges = [[i for i, x in enumerate(ax) if x] for ax in w]
        out = {}
        for c in np.ndindex(*[len(r) for r in ranges]):
            cell = tuple(ranges[a][c[a]] for a in range(S.d))
            if occ[cell]:
                out[cell] = math.prod(w[a][cell[a]] for a in range(S.d))
        return out

    wb = overlaps(ball)
    mu_b = sum(wb.values(), Fraction(0))
    if mu_b == 0:
        raise PreconditionError("μ(B) = 0")
    vals = {c: value(c) for c in wb}
    mean = sum((vals[c] * w for c, w in wb.items()), Fraction(0)) / mu_b
    lhs = sum((abs(vals[c] - mean) * w for c, w in wb.items()), Fraction(0)) / mu_b

    wB = overlaps(big)
    mu_B = sum(wB.values(), Fraction(0))
    grads = {}
    for c in wB:
        fc = value(c)
        g = Fraction(0)
        for a in range(S.d):
            for step in (-1, 1):
                nb = list(c)
                nb[a] += step
                if 0 <= nb[a] < S.side and occ[tuple(nb)]:
                    g = max(g, abs(fc - value(tuple(nb))))
        grads[c] = g * S.side
    rhs = ball.radius * sum((grads[c] * w for c, w in wB.items()), Fraction(0)) / mu_B
    return PoincareSample(ball, lam, mean, lhs, rhs, grads)
