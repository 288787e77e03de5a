"""Propagation of the named constants of the isoperimetric argument.

Rational quantities are kept as exact fractions. Anything involving square
roots, fractional powers or the unit-ball volume ω_d is carried as a
certified interval (mpmath ``iv``) whose precision can be raised on demand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from mpmath import iv
from mpmath.libmp import to_rational, to_str

from .lattice import as_fraction, exact_sqrt

DEFAULT_DPS = 30


class ConstantsError(ValueError):
    pass


class HypothesisError(ConstantsError):
    """An input violates a hypothesis of the step being evaluated."""


def doubling_from_ahlfors(c_ar, d: int) -> tuple[Fraction, Fraction]:
    """D = 2^d C_AR^d and N = D^4."""
    c = as_fraction(c_ar)
    if c < 1:
        raise ConstantsError("the Ahlfors constant is at least 1")
    if d < 2:
        raise ConstantsError("d must be at least 2")
    D = Fraction(2) ** d * c ** d
    return D, D ** 4


def _ceil_log2(x: Fraction) -> tuple[int, bool]:
    """(ceil(log2 x), exact) for rational x >= 1."""
    m = 0
    while Fraction(2) ** m < x:
        m += 1
    return m, Fraction(2) ** m == x


@dataclass(frozen=True)
class IterationResult:
    C_S: Fraction
    Lambda_S: Fraction
    exponent: int
    rounded: bool

    @property
    def provenance(self) -> str:
        note = " (log2 Λ rounded up)" if self.rounded else ""
        return f"C_S = D^(7 + log2 Λ) * C with exponent {self.exponent}{note}; Λ_S = 2Λ"


def iterate_constants(D, tau, C, Lam) -> IterationResult:
    """The isoperimetric constant obtained by iterating a (τ, C) inequality."""
    D, tau, C, Lam = (as_fraction(v) for v in (D, tau, C, Lam))
    if D < 2:
        raise ConstantsError("D must be at least 2")
    if C <= 0:
        raise ConstantsError("C must be positive")
    if Lam < 1:
        raise ConstantsError("Λ must be at least 1")
    if not 0 < tau <= 1 / D ** 3:
        raise HypothesisError(f"τ = {tau} is outside (0, 1/D^3] = (0, {1 / D ** 3}]")
    m, exact = _ceil_log2(Lam)
    return IterationResult(D ** (7 + m) * C, 2 * Lam, 7 + m, not exact)


# -- exact-or-interval numbers ---------------------------------------------------

def _iv(x: Fraction):
    return iv.mpf(x.numerator) / iv.mpf(x.denominator)


class CNum:
    """A real number known exactly (Fraction) or through a certified interval."""

    __slots__ = ("exact", "ival")

    def __init__(self, exact: Fraction | None = None, ival=None):
        self.exact = exact
        self.ival = _iv(exact) if exact is not None else ival

    @classmethod
    def of(cls, x) -> "CNum":
        return x if isinstance(x, CNum) else cls(as_fraction(x))

    def _bin(self, other, op):
        other = CNum.of(other)
        if self.exact is not None and other.exact is not None:
            return CNum(op(self.exact, other.exact))
        return CNum(None, op(self.ival, other.ival))

    def __add__(self, o):
        return self._bin(o, lambda a, b: a + b)

    def __mul__(self, o):
        return self._bin(o, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return self._bin(o, lambda a, b: a / b)

    def __rtruediv__(self, o):
        return CNum.of(o) / self

    def __pow__(self, p):
        p = as_fraction(p)
        if self.exact is not None:
            if p.denominator == 1:
                return CNum(self.exact ** int(p))
            root = _exact_root(self.exact, p.denominator)
            if root is not None:
                return CNum(root ** p.numerator)
        if p.denominator == 1:
            return CNum(None, self.ival ** int(p))
        return CNum(None, iv.exp(iv.log(self.ival) * _iv(p)))

    def sqrt(self) -> "CNum":
        if self.exact is not None:
            r = exact_sqrt(self.exact)
            if r is not None:
                return CNum(r)
        return CNum(None, iv.sqrt(self.ival))

    def bounds(self) -> tuple[Fraction, Fraction]:
        if self.exact is not None:
            return self.exact, self.exact
        lo, hi = self.ival._mpi_
        return Fraction(*to_rational(lo)), Fraction(*to_rational(hi))

    def to_json(self, digits: int = 20) -> dict:
        if self.exact is not None:
            return {"kind": "exact-rational", "value": str(self.exact)}
        lo, hi = self.ival._mpi_
        return {"kind": "certified-interval", "lower": to_str(lo, digits), "upper": to_str(hi, digits)}


def _iroot(n: int, q: int) -> int | None:
    lo, hi = 0, 1 << (n.bit_length() // q + 1)
    while lo < hi:
        mid = (lo + hi) // 2
        if mid ** q < n:
            lo = mid + 1
        else:
            hi = mid
    return lo if lo ** q == n else None


def _exact_root(x: Fraction, q: int) -> Fraction | None:
    if x < 0:
        return None
    a, b = _iroot(x.numerator, q), _iroot(x.denominator, q)
    return Fraction(a, b) if a is not None and b is not None else None


def unit_ball_volume(d: int) -> CNum:
    """ω_d in closed form (even and odd dimensions)."""
    pi = CNum(None, iv.pi)
    if d % 2 == 0:
        return pi ** (d // 2) / math.factorial(d // 2)
    dfact = math.prod(range(d, 0, -2))
    return pi ** ((d - 1) // 2) * Fraction(2 ** ((d + 1) // 2), dfact)


def cmax(a: CNum, b: CNum) -> CNum:
    a_lo, a_hi = a.bounds()
    b_lo, b_hi = b.bounds()
    if a_lo >= b_hi:
        return a
    if b_lo >= a_hi:
        return b
    lo = a.ival.a if a_lo >= b_lo else b.ival.a
    hi = a.ival.b if a_hi >= b_hi else b.ival.b
    return CNum(None, iv.mpf([lo, hi]))


# -- the ledger -----------------------------------------------------------------

INPUT_NAMES = ("d", "A_prime", "delta", "L", "C_AR", "C_N", "b", "sigma", "L1", "tau", "C", "Lambda")


@dataclass(frozen=True)
class LedgerEntry:
    name: str
    formula: str
    value: CNum

    def to_json(self, digits: int = 20) -> dict:
        return {"name": self.name, "formula": self.formula, **self.value.to_json(digits)}


@dataclass
class ConstantLedger:
    inputs: dict
    entries: dict[str, LedgerEntry]
    dps: int
    notes: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> CNum:
        return self.entries[name].value

    def recompute(self, dps: int | None = None) -> "ConstantLedger":
        return step_ledger(dict(self.inputs), dps=dps or self.dps)

    def compare(self, name: str, threshold, max_dps: int = 400) -> int:
        """Sign of entry - threshold, escalating precision until it is decided."""
        t = as_fraction(threshold)
        dps = self.dps
        while True:
            lo, hi = self.recompute(dps)[name].bounds() if dps != self.dps else self[name].bounds()
            if lo > t:
                return 1
            if hi < t:
                return -1
            if lo == hi == t:
                return 0
            if dps >= max_dps:
                raise ConstantsError(f"cannot separate {name} from {t} at {dps} digits")
            dps *= 2

    def to_json(self, digits: int = 20) -> dict:
        return {
            "inputs": {k: (str(v) if v is not None else None) for k, v in self.inputs.items()},
            "entries": [e.to_json(digits) for e in self.entries.values()],
            "precision_digits": self.dps,
            "notes": list(self.notes),
        }


def _opt(inputs: dict, key: str):
    v = inputs.get(key)
    return None if v is None else as_fraction(v)


def step_ledger(inputs: dict, dps: int = DEFAULT_DPS) -> ConstantLedger:
    """Evaluate every constant of the four-step argument from ``inputs``.

    Required: d, A_prime, delta, L, C_AR. Either sigma, or C_N and b.
    Optional: L1 (selects the relocated first ball), tau/C/Lambda (the
    iteration step).
    """
    unknown = set(inputs) - set(INPUT_NAMES)
    if unknown:
        raise ConstantsError(f"unknown inputs: {sorted(unknown)}")
    for key in ("d", "A_prime", "delta", "L", "C_AR"):
        if inputs.get(key) is None:
            raise ConstantsError(f"missing input {key}")
    d = int(inputs["d"])
    Ap, delta, L, c_ar = (as_fraction(inputs[k]) for k in ("A_prime", "delta", "L", "C_AR"))
    if min(Ap, delta, L, c_ar) <= 0:
        raise ConstantsError("inputs must be positive")
    old = iv.dps
    iv.dps = dps
    try:
        return _ledger(inputs, d, Ap, delta, L, c_ar, dps)
    finally:
        iv.dps = old


def _ledger(inputs, d, Ap, delta, L, c_ar, dps) -> ConstantLedger:
    entries: dict[str, LedgerEntry] = {}
    notes: list[str] = []

    def put(name, formula, value):
        entries[name] = LedgerEntry(name, formula, CNum.of(value))
        return entries[name].value

    D_, N_ = doubling_from_ahlfors(c_ar, d)
    D = put("D", "2^d * C_AR^d", D_)
    put("N", "D^4", N_)
    sqrt_d = CNum(Fraction(d)).sqrt()
    put("S1", "4 sqrt(d) / delta", sqrt_d * 4 / delta)

    L1 = _opt(inputs, "L1")
    if L1 is None:
        eta1 = put("eta1", "1 / D^3 (first ball kept)", 1 / D ** 3)
    else:
        eta1 = put("eta1", "1 / (L1 D^3) (first ball relocated)", 1 / (D ** 3 * L1))

    inflate = CNum(64 * Ap * Ap * d) ** Fraction(d, 2)  # (8 A' sqrt(d))^d
    eta = put("eta", "(8 A' sqrt(d))^-d * C_AR^-2 * eta1", eta1 / (inflate * c_ar ** 2))

    sigma_in = _opt(inputs, "sigma")
    if sigma_in is not None:
        sigma = put("sigma", "supplied", sigma_in)
    else:
        c_n, b = _opt(inputs, "C_N"), _opt(inputs, "b")
        if c_n is None or b is None:
            raise ConstantsError("σ needs either a supplied value or both C_N and b")
        sigma = put("sigma", "(1 / (16 A')) * (eta / (2 C_N))^(1/b)",
                    (eta / (2 * c_n)) ** (1 / b) / (16 * Ap))
    put("S2", "max(4 A', 4 sqrt(d) / sigma)", cmax(CNum(4 * Ap), sqrt_d * 4 / sigma))
    put("S", "S1 * S2", entries["S1"].value * entries["S2"].value)

    eta2 = put("eta2", "eta1 / (2 (8 A' sqrt(d))^d C_AR^2 D^2)", eta1 / (inflate * c_ar ** 2 * D ** 2 * 2))
    notes.append("eta2 is taken from the relocation branch, the smaller of the two alternatives")
    omega = put("omega_d", "volume of the Euclidean unit ball", unit_ball_volume(d))
    eta3 = put("eta3", "eta2 / (2^d omega_d d^(d/2))", eta2 / (omega * Fraction(2) ** d * CNum(Fraction(d)) ** Fraction(d, 2)))
    put("eps1", "sigma^(d-1) delta^(d-1) eta3 / (4 d L (64 A' d)^(d-1))",
        sigma ** (d - 1) * Fraction(delta) ** (d - 1) * eta3 / (L * 4 * d * (64 * Ap * d) ** (d - 1)))
    put("beta", "(sigma / (4 sqrt(d))) * (eta3 / (4 d))^(1/(d-1))",
        sigma / (sqrt_d * 4) * (eta3 / (4 * d)) ** Fraction(1, d - 1))
    put("Delta", "eta3 / (2 d)", eta3 / (2 * d))
    notes.append("Delta measures boundary content in B(x2, sqrt(d) r2) against r2^(d-1)")

    tau, C, Lam = _opt(inputs, "tau"), _opt(inputs, "C"), _opt(inputs, "Lambda")
    if tau is not None or C is not None or Lam is not None:
        if tau is None or C is None or Lam is None:
            raise ConstantsError("the iteration step needs tau, C and Lambda together")
        res = iterate_constants(D_, tau, C, Lam)
        put("C_S", res.provenance.split(";")[0], res.C_S)
        put("Lambda_S", "2 Lambda", res.Lambda_S)
    clean = {k: inputs.get(k) for k in INPUT_NAMES if inputs.get(k) is not None}
    return ConstantLedger(clean, entries, dps, notes)
