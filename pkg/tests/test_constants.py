from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from sponge_iso.constants import (ConstantsError, HypothesisError, doubling_from_ahlfors, iterate_constants,
                                  step_ledger, unit_ball_volume)

BASE = {"d": 2, "A_prime": 1, "delta": F(1, 3), "L": 2, "C_AR": 1, "sigma": F(1, 10)}


@pytest.mark.parametrize("c_ar,d,D,N", [(1, 2, 4, 256), (1, 3, 8, 4096), (2, 2, 16, 16 ** 4)])
def test_doubling_examples(c_ar, d, D, N):
    assert doubling_from_ahlfors(c_ar, d) == (D, N)


@pytest.mark.parametrize("D,tau,C,Lam,C_S,Lam_S", [
    (2, F(1, 8), 1, 1, 128, 2),
    (2, F(1, 8), 1, 2, 256, 4),
    (3, F(1, 27), 5, 1, 10935, 2),
])
def test_iteration_examples(D, tau, C, Lam, C_S, Lam_S):
    res = iterate_constants(D, tau, C, Lam)
    assert (res.C_S, res.Lambda_S) == (C_S, Lam_S)
    assert not res.rounded


def test_iteration_rounds_exponent_up():
    res = iterate_constants(2, F(1, 8), 1, 3)
    assert res.exponent == 9 and res.rounded and res.C_S == 2 ** 9
    assert "rounded up" in res.provenance


def test_iteration_rejects_large_tau():
    with pytest.raises(HypothesisError):
        iterate_constants(2, F(1, 4), 1, 1)


@given(st.integers(2, 6), st.integers(1, 20), st.integers(1, 20), st.integers(1, 16), st.integers(1, 16))
def test_iteration_monotone(D, C1, C2, L1, L2):
    tau = F(1, D ** 3)
    a = iterate_constants(D, tau, min(C1, C2), min(L1, L2))
    b = iterate_constants(D, tau, max(C1, C2), max(L1, L2))
    assert a.C_S <= b.C_S
    assert iterate_constants(D + 1, F(1, (D + 1) ** 3), C1, L1).C_S >= iterate_constants(D, tau, C1, L1).C_S
    assert iterate_constants(D, tau, C1, L1).Lambda_S == 2 * L1


def test_S1_interval():
    led = step_ledger(BASE)
    lo, hi = led["S1"].bounds()
    assert hi - lo < F(1, 10 ** 12)
    # S1 = 12 sqrt(2)
    assert lo ** 2 <= 288 <= hi ** 2


def test_eta1_branches():
    led = step_ledger(BASE)
    assert led["eta1"].exact == F(1, 64)
    assert step_ledger({**BASE, "L1": 2})["eta1"].exact == F(1, 128)


def test_even_dimension_values_stay_exact():
    led = step_ledger(BASE)
    # (8 A' sqrt(2))^2 = 128
    assert led["eta"].exact == F(1, 64) / 128
    assert led["eta2"].exact == F(1, 64) / (128 * 16 * 2)


def test_beta_in_dimension_two():
    led = step_ledger(BASE)
    lo, hi = led["beta"].bounds()
    e_lo, e_hi = led["eta3"].bounds()
    s = F(1, 10)
    # β = (σ / (4 sqrt 2)) (η3 / 8), bracketed with sqrt 2 in [1.41421, 1.41422]
    assert s / (4 * F(141422, 100000)) * e_lo / 8 <= hi
    assert lo <= s / (4 * F(141421, 100000)) * e_hi / 8


def test_sigma_derivation_needs_both_inputs():
    inputs = {k: v for k, v in BASE.items() if k != "sigma"}
    with pytest.raises(ConstantsError):
        step_ledger({**inputs, "C_N": 2})
    led = step_ledger({**inputs, "C_N": 2, "b": 2})
    assert led["sigma"].exact is None or led["sigma"].exact > 0


def test_missing_required_input():
    with pytest.raises(ConstantsError):
        step_ledger({k: v for k, v in BASE.items() if k != "L"})


def test_recompute_is_bit_identical():
    led = step_ledger({**BASE, "d": 3, "tau": F(1, 512), "C": 1, "Lambda": 1})
    again = led.recompute()
    for name, entry in led.entries.items():
        assert entry.value.to_json(40) == again.entries[name].value.to_json(40)
    assert led.to_json() == again.to_json()


def _sweep(name, key, values, base):
    out = []
    for v in values:
        out.append(step_ledger({**base, key: v})[name].bounds())
    return out


@pytest.mark.parametrize("d", [2, 3])
def test_eps1_decreasing_in_L(d):
    bounds = _sweep("eps1", "L", [1, 2, 3, 5, 8], {**BASE, "d": d})
    for (lo, _), (_, hi) in zip(bounds, bounds[1:]):
        assert hi < lo


@pytest.mark.parametrize("d", [2, 3])
def test_beta_decreasing_in_A_prime(d):
    bounds = _sweep("beta", "A_prime", [1, 2, 3, 5, 8], {**BASE, "d": d})
    for (lo, _), (_, hi) in zip(bounds, bounds[1:]):
        assert hi < lo


def test_compare_escalates_precision():
    led = step_ledger(BASE, dps=15)
    lo, hi = led["S1"].bounds()
    assert led.compare("S1", 16) == 1
    assert led.compare("S1", 17) == -1
    assert led.compare("D", 4) == 0
    # a threshold within 1e-25 of 12 sqrt 2 needs more than 15 digits
    t = F(16970562748477141, 10 ** 15) + F(1, 10 ** 26)
    assert led.compare("S1", t) in (1, -1)


def test_unit_ball_volume():
    lo, hi = unit_ball_volume(2).bounds()
    assert lo < F(314159266, 10 ** 8) and hi > F(314159265, 10 ** 8)
    lo3, hi3 = unit_ball_volume(3).bounds()
    assert lo3 < F(418879021, 10 ** 8) < hi3 + F(1, 10 ** 8)
