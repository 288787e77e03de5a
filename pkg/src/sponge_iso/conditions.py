"""Exact verification of the sparseness and small-projection conditions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .lattice import BallSpec, LatticeError, as_fraction, exact_sqrt, union_volume
from .sponge import GeometryError, SpongeLevel, obstacle_registry, tri_norm_sq


@dataclass(frozen=True)
class RootOfRational:
    """A non-negative real known through its exact square."""

    square: Fraction

    @property
    def exact(self) -> Fraction | None:
        return exact_sqrt(self.square)

    def __float__(self) -> float:
        return math.sqrt(self.square)

    def ge(self, threshold) -> bool:
        t = as_fraction(threshold)
        return t <= 0 or self.square >= t * t


@dataclass
class SparseReport:
    verdicts: dict[str, str]
    delta_star: RootOfRational
    boundary_ratio: RootOfRational
    pair_ratio: RootOfRational | None
    L_star: RootOfRational
    delta: Fraction
    L_sq: Fraction
    witnesses: dict = field(default_factory=dict)
    asserted: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v in ("pass", "asserted") for v in self.verdicts.values())


def _cube_obstacles(S: SpongeLevel):
    reg = obstacle_registry(S)
    M = S.side
    lo = np.array([[int(v * M) for v in R.region.lo] for R in reg], dtype=np.int64).reshape(-1, S.d)
    hi = np.array([[int(v * M) for v in R.region.hi] for R in reg], dtype=np.int64).reshape(-1, S.d)
    lvl = np.array([R.level for R in reg], dtype=np.int64)
    return reg, lo, hi, lvl


def check_sparse(S: SpongeLevel, delta=Fraction(1, 3), L_sq=None, chunk: int = 512) -> SparseReport:
    """Witnessed δ* and L* with exact verdicts for conditions (1), (3)-(5).

    ``L_sq`` is the square of the diameter constant L (default d, i.e. L = √d).
    """
    delta = as_fraction(delta)
    if not 0 < delta < 1:
        raise ValueError("δ must lie in (0, 1)")
    if S.geometry == "triangle":
        return _check_sparse_triangle(S, delta, L_sq)
    if S.geometry != "cube":
        raise GeometryError("a plain lattice has no obstacles to check")
    L_sq = Fraction(S.d) if L_sq is None else as_fraction(L_sq)
    reg, lo, hi, lvl = _cube_obstacles(S)
    M = S.side
    if not reg:
        inf = RootOfRational(Fraction(10 ** 18))
        return SparseReport({c: "pass" for c in ("1", "3", "4", "5")} | {"2": "asserted"},
                            inf, inf, None, RootOfRational(Fraction(0)), delta, L_sq)
    scale = np.array([int(S.ladder[j - 1] * M) for j in range(1, S.k + 1)], dtype=np.int64)
    s_prev = scale[lvl - 1]  # s_{level-1} in finest-lattice units

    inside = bool(np.all(lo >= 0) and np.all(hi <= M))
    bdist = np.minimum(lo, M - hi).min(axis=1)
    i_b = min(range(len(reg)), key=lambda i: Fraction(int(bdist[i]), int(s_prev[i])))
    boundary_ratio = Fraction(int(bdist[i_b]), int(s_prev[i_b]))

    diam_sq = [Fraction(int(((hi[i] - lo[i]) ** 2).sum()), int(M) ** 2) / S.ladder[int(lvl[i])] ** 2
               for i in range(len(reg))]
    L_star_sq = max(diam_sq)

    best, best_pair = None, None
    for start in range(0, len(reg), chunk):
        a_lo, a_hi, a_lv = lo[start:start + chunk], hi[start:start + chunk], lvl[start:start + chunk]
        gap = np.maximum(np.maximum(lo[None, :, :] - a_hi[:, None, :], a_lo[:, None, :] - hi[None, :, :]), 0)
        g2 = (gap * gap).sum(axis=2)
        valid = lvl[None, :] <= a_lv[:, None]
        idx = np.arange(start, start + len(a_lo))
        valid[np.arange(len(a_lo)), idx] = False
        if not valid.any():
            continue
        sp = s_prev[start:start + chunk].astype(np.float64)
        ratio = np.where(valid, g2 / (sp[:, None] ** 2), np.inf)
        i, j = np.unravel_index(np.argmin(ratio), ratio.shape)
        # re-decide the float argmin exactly among near-ties
        cand = np.argwhere(ratio <= ratio[i, j] * (1 + 1e-9) + 1e-300)
        for ci, cj in cand[:64]:
            val = Fraction(int(g2[ci, cj]), int(s_prev[start + ci]) ** 2)
            if best is None or val < best:
                best, best_pair = val, (int(start + ci), int(cj))
    pair_ratio = RootOfRational(best) if best is not None else None
    delta_sq = min(boundary_ratio ** 2, best) if best is not None else boundary_ratio ** 2

    verdicts = {
        "1": "pass" if inside else "fail",
        "2": "asserted",
        "3": "pass" if L_star_sq <= L_sq else "fail",
        "4": "pass" if boundary_ratio >= delta else "fail",
        "5": "pass" if best is None or best >= delta * delta else "fail",
    }
    witnesses = {"boundary": reg[i_b].to_json()}
    if best_pair is not None:
        witnesses["pair"] = [reg[best_pair[0]].to_json(), reg[best_pair[1]].to_json()]
    return SparseReport(verdicts, RootOfRational(delta_sq), RootOfRational(boundary_ratio ** 2),
                        pair_ratio, RootOfRational(L_star_sq), delta, L_sq, witnesses,
                        {"uniformity": "cubes are uniform and co-uniform; constant A taken on trust"})


# -- triangles: distances in the equilateral metric a^2 + ab + b^2 -------------

def _inner(u, v):
    return u[0] * v[0] + (u[0] * v[1] + u[1] * v[0]) / 2 + u[1] * v[1]


def _point_segment_sq(x, p, q) -> Fraction:
    e = (q[0] - p[0], q[1] - p[1])
    w = (x[0] - p[0], x[1] - p[1])
    t = _inner(w, e) / _inner(e, e)
    t = min(max(t, Fraction(0)), Fraction(1))
    r = (w[0] - t * e[0], w[1] - t * e[1])
    return tri_norm_sq(*r)


def _triangle_gap_sq(A, B) -> Fraction:
    best = None
    for P, Q in ((A, B), (B, A)):
        for x in P:
            for i in range(3):
                v = _point_segment_sq(x, Q[i], Q[(i + 1) % 3])
                best = v if best is None or v < best else best
    return best


def _float_gap_sq(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Vectorized float version of _triangle_gap_sq for all pairs (A_i, B_j)."""
    G = np.array([[1.0, 0.5], [0.5, 1.0]])
    out = np.full((len(A), len(B)), np.inf)
    for P, Q, flip in ((A, B, False), (B, A, True)):
        for vi in range(3):
            x = P[:, vi, :]
            for ei in range(3):
                p, q = Q[:, ei, :], Q[:, (ei + 1) % 3, :]
                e = q - p
                w = x[:, None, :] - p[None, :, :]
                ee = np.einsum("ja,ab,jb->j", e, G, e)
                t = np.clip(np.einsum("ija,ab,jb->ij", w, G, e) / ee[None, :], 0, 1)
                r = w - t[..., None] * e[None, :, :]
                d2 = np.einsum("ija,ab,ijb->ij", r, G, r)
                out = np.minimum(out, d2.T if flip else d2)
    return out


def _check_sparse_triangle(S: SpongeLevel, delta: Fraction, L_sq) -> SparseReport:
    reg = obstacle_registry(S)
    L_sq = Fraction(1) if L_sq is None else as_fraction(L_sq)
    verts = [R.vertices for R in reg]
    lvls = [R.level for R in reg]
    # distance to the complement of the root triangle: min barycentric * height
    b_vals = []
    for V, lv in zip(verts, lvls):
        m = min(min(1 - a - b, a, b) for a, b in V)
        b_vals.append(m * m * Fraction(3, 4) / S.ladder[lv - 1] ** 2)
    i_b = min(range(len(reg)), key=b_vals.__getitem__)
    inside = all(min(1 - a - b, a, b) >= 0 for V in verts for a, b in V)
    diam = max(max(tri_norm_sq(V[i][0] - V[(i + 1) % 3][0], V[i][1] - V[(i + 1) % 3][1])
                   for i in range(3)) / S.ladder[lv] ** 2 for V, lv in zip(verts, lvls))
    arr = np.array([[[float(a), float(b)] for a, b in V] for V in verts])
    fl = _float_gap_sq(arr, arr)
    lv_arr = np.array(lvls)
    sp = np.array([float(S.ladder[lv - 1]) for lv in lvls])
    valid = lv_arr[None, :] <= lv_arr[:, None]
    np.fill_diagonal(valid, False)
    best, best_pair = None, None
    if valid.any():
        ratio = np.where(valid, fl / sp[:, None] ** 2, np.inf)
        floor_ = ratio.min()
        for i, j in np.argwhere(ratio <= floor_ * (1 + 1e-9) + 1e-15)[:64]:
            val = _triangle_gap_sq(verts[i], verts[j]) / S.ladder[lvls[i] - 1] ** 2
            if best is None or val < best:
                best, best_pair = val, (int(i), int(j))
    delta_sq = b_vals[i_b] if best is None else min(b_vals[i_b], best)
    verdicts = {
        "1": "pass" if inside else "fail",
        "2": "asserted",
        "3": "pass" if diam <= L_sq else "fail",
        "4": "pass" if b_vals[i_b] >= delta * delta else "fail",
        "5": "pass" if best is None or best >= delta * delta else "fail",
    }
    wit = {"boundary": reg[i_b].to_json()}
    if best_pair:
        wit["pair"] = [reg[best_pair[0]].to_json(), reg[best_pair[1]].to_json()]
    return SparseReport(verdicts, RootOfRational(delta_sq), RootOfRational(b_vals[i_b]),
                        RootOfRational(best) if best is not None else None,
                        RootOfRational(diam), delta, L_sq, wit,
                        {"uniformity": "triangles are uniform and co-uniform; constant A taken on trust"})


# -- condition (6) -----------------------------------------------------------

@dataclass(frozen=True)
class ShadowRecord:
    level: int
    axis: int
    ball: BallSpec
    shadow: Fraction
    L_needed: Fraction


@dataclass
class ProjectionReport:
    records: list[ShadowRecord]
    L_star: dict[int, Fraction]
    skipped: list[tuple[int, BallSpec]]
    family: str = "lattice-aligned centers and dyadic radii; finite sample of all balls"

    @property
    def L_max(self) -> Fraction:
        return max(self.L_star.values(), default=Fraction(0))

    def holds(self, L) -> bool:
        return self.L_max <= as_fraction(L)


def shadow_measure(S: SpongeLevel, level: int, ball: BallSpec, axis: int) -> Fraction:
    """Exact ``H_{d-1}(π_axis(B ∩ ⋃ R_level))`` for an open linf ball."""
    if ball.norm != "linf":
        raise GeometryError("shadows are computed for linf balls")
    if S.geometry != "cube":
        raise GeometryError("shadows are implemented for cube sponges")
    reg = [R for R in obstacle_registry(S.truncated(level)) if R.level == level]
    return _shadow(reg, ball, axis)


def _shadow(reg, ball: BallSpec, axis: int) -> Fraction:
    box = ball.box()
    pieces = []
    for R in reg:
        inter = R.region.intersect(box)
        if inter is None or inter.is_degenerate():
            continue
        p = inter.project_out(axis)
        pieces.append((p.lo, p.hi))
    return union_volume(pieces)


def _int_shadow(lo: np.ndarray, hi: np.ndarray, blo, bhi, axis: int) -> int:
    """Integer-coordinate version of _shadow."""
    clo = np.maximum(lo, blo)
    chi = np.minimum(hi, bhi)
    keep = np.all(chi > clo, axis=1)
    if not keep.any():
        return 0
    clo = np.delete(clo[keep], axis, axis=1)
    chi = np.delete(chi[keep], axis, axis=1)
    if clo.shape[1] == 1:
        order = np.argsort(clo[:, 0], kind="stable")
        a, b = clo[order, 0], chi[order, 0]
        run_hi = np.maximum.accumulate(b)
        starts = np.concatenate(([True], a[1:] > run_hi[:-1]))
        grp = np.cumsum(starts) - 1
        seg_lo = a[starts]
        seg_hi = np.maximum.reduceat(b, np.flatnonzero(starts))
        return int((seg_hi - seg_lo).sum())
    return int(union_volume([(tuple(int(v) for v in x), tuple(int(v) for v in y)) for x, y in zip(clo, chi)]))


def lattice_ball_family(S: SpongeLevel, level: int, stride: int = 1) -> list[BallSpec]:
    """linf balls centered on the level-(k-1) lattice (every ``stride`` points)
    with radii s_{k-1} * 2^j up to the first radius covering the domain."""
    s = S.ladder[level - 1]
    pts = round(1 / s)
    centers = [i * s for i in range(0, pts + 1, stride)]
    radii, r = [], s
    while True:
        radii.append(r)
        if r >= 1:
            break
        r *= 2
    from itertools import product
    return [BallSpec(c, r, "linf") for r in radii for c in product(centers, repeat=S.d)]


def check_projections(S: SpongeLevel, balls: Sequence[BallSpec] = (), *, stride: int = 1,
                      levels: Sequence[int] | None = None, include_family: bool = True) -> ProjectionReport:
    """Smallest L for condition (6) over a lattice ball family plus ``balls``."""
    if S.geometry != "cube":
        raise GeometryError("condition (6) is checked for cube sponges")
    reg = obstacle_registry(S)
    levels = list(range(1, S.k + 1)) if levels is None else list(levels)
    records, skipped, L_star = [], [], {}
    for lv in levels:
        if not 1 <= lv <= S.k:
            raise LatticeError(f"level {lv} outside 1..{S.k}")
        level_reg = [R for R in reg if R.level == lv]
        s_prev = S.ladder[lv - 1]
        n_k = S.n[lv - 1]
        family = (lattice_ball_family(S, lv, stride) if include_family else []) + list(balls)
        L_star[lv] = Fraction(0)
        cache = {}
        for ball in family:
            if ball.radius < s_prev:
                skipped.append((lv, ball))
                continue
            den = math.lcm(S.side, ball.radius.denominator, *(c.denominator for c in ball.center))
            key = den
            if key not in cache:
                cache[key] = (
                    np.array([[int(v * den) for v in R.region.lo] for R in level_reg], dtype=object).reshape(-1, S.d),
                    np.array([[int(v * den) for v in R.region.hi] for R in level_reg], dtype=object).reshape(-1, S.d),
                )
            lo, hi = cache[key]
            bb = ball.box()
            blo = np.array([int(v * den) for v in bb.lo], dtype=object)
            bhi = np.array([int(v * den) for v in bb.hi], dtype=object)
            for axis in range(S.d):
                sh = Fraction(_int_shadow(lo, hi, blo, bhi, axis), den ** (S.d - 1)) if len(level_reg) else Fraction(0)
                need = sh * Fraction(n_k) ** (S.d - 1) / ball.radius ** (S.d - 1)
                records.append(ShadowRecord(lv, axis, ball, sh, need))
                if need > L_star[lv]:
                    L_star[lv] = need
    return ProjectionReport(records, L_star, skipped)


# -- summability ---------------------------------------------------------------

@dataclass(frozen=True)
class SummabilityReport:
    partial_sums: tuple[Fraction, ...]
    verdict: str  # "divergent pattern" | "convergent pattern" | "inconclusive at horizon"
    reason: str


def generator_terms(gen: dict, K: int) -> list[int]:
    kind = gen.get("type", "explicit")
    if kind == "constant":
        return [int(gen["value"])] * K
    if kind == "geometric":
        a, q, b = int(gen.get("scale", 1)), int(gen["base"]), int(gen.get("offset", 0))
        return [a * q ** k + b for k in range(1, K + 1)]
    if kind == "polynomial":
        a, p, b = int(gen.get("coeff", 1)), int(gen["power"]), int(gen.get("offset", 0))
        return [a * k ** p + b for k in range(1, K + 1)]
    if kind == "explicit":
        vals = [int(v) for v in gen["values"]]
        if len(vals) < K:
            raise LatticeError(f"explicit sequence has {len(vals)} terms, horizon is {K}")
        return vals[:K]
    raise LatticeError(f"unknown generator type {kind!r}")


def summability(n, d: int, K: int | None = None) -> SummabilityReport:
    """Exact partial sums of ``sum 1/n_k^(d-1)`` and a verdict when the
    generator has a closed-form answer. ``n`` is a generator dict or a list."""
    gen = n if isinstance(n, dict) else {"type": "explicit", "values": list(n)}
    if K is None:
        if gen.get("type") != "explicit":
            raise LatticeError("a horizon K is required for generated sequences")
        K = len(gen["values"])
    terms = generator_terms(gen, K)
    if any(t < 1 for t in terms):
        raise LatticeError("sequence terms must be positive")
    sums, acc = [], Fraction(0)
    for t in terms:
        acc += Fraction(1, t ** (d - 1))
        sums.append(acc)
    kind = gen.get("type")
    if kind == "constant":
        verdict, reason = "divergent pattern", "constant terms 1/c^(d-1) > 0"
    elif kind == "geometric" and int(gen["base"]) >= 2 and int(gen.get("scale", 1)) >= 1:
        verdict, reason = "convergent pattern", "terms bounded by a geometric series"
    elif kind == "polynomial" and int(gen.get("coeff", 1)) >= 1:
        p = int(gen["power"])
        if p * (d - 1) > 1:
            verdict, reason = "convergent pattern", f"p-series with exponent {p * (d - 1)} > 1"
        else:
            verdict, reason = "divergent pattern", f"p-series with exponent {p * (d - 1)} <= 1"
    else:
        verdict, reason = "inconclusive at horizon", "finite data decides nothing about the tail"
    return SummabilityReport(tuple(sums), verdict, reason)
