import math

import numpy as np
import pytest
from scipy import integrate

from cuspcount.regvar import (NormalizingSequence, SlowlyVarying, fitted_index, karamata_sum_ratio,
                              karamata_upper_tail_ratio, potter_check, solve_a_k, tilde_L)

ONE = SlowlyVarying.one()
LN = SlowlyVarying.log_power(1.0)


def test_tilde_L_closed_forms():
    for x in (1.0, 2.5, 1e3, 1e9):
        assert tilde_L(ONE, x) == pytest.approx(math.log(x), rel=1e-12, abs=1e-15)
        assert tilde_L(LN, x) == pytest.approx(math.log(x) ** 2 / 2, rel=1e-12, abs=1e-15)


def test_tilde_L_quadrature_matches_closed_form():
    xs = np.geomspace(1.0, 1e6, 200)
    tab = SlowlyVarying.tabulated(xs, np.log(xs) + 1.0, "logpow")
    for x in (10.0, 1e3, 1e5):
        assert tilde_L(tab, x) == pytest.approx(math.log(x) ** 2 / 2 + math.log(x), rel=1e-6)


def test_tilde_L_invlog2_from_e():
    L = SlowlyVarying.inverse_log_squared()
    val, _ = integrate.quad(lambda y: 1.0 / (y * math.log(y) ** 2), math.e, 1e3)
    assert tilde_L(L, 1e3) == pytest.approx(val, rel=1e-9)
    with pytest.raises(ValueError):
        tilde_L(L, 2.0)


def test_L_over_tilde_L_decreases():
    xs = np.geomspace(10, 1e12, 40)
    r = [float(LN(x)) / tilde_L(LN, x) for x in xs]
    assert all(b < a for a, b in zip(r, r[1:]))
    assert r[-1] < 0.1


def test_slow_variation_on_grid():
    for L in (ONE, LN, SlowlyVarying.log_power(-0.5), SlowlyVarying.inverse_log_squared()):
        ts = np.geomspace(1e3, 1e200, 12)
        for lam in (0.5, 2.0, 10.0):
            gap = [abs(float(L(lam * t)) / float(L(t)) - 1.0) for t in ts]
            assert all(b <= a for a, b in zip(gap, gap[1:]))
            assert gap[-1] < 0.01


def test_potter_examples():
    rep = potter_check(ONE, 1.5, 0.1, 1e8)
    assert rep.ok and rep.T == rep.grid_min
    rep = potter_check(LN, 2.0, 0.1, 1e8)
    assert rep.ok and rep.T is not None and math.isfinite(rep.T)
    xs = np.geomspace(1.0, 1e8, 4000)
    wobble = SlowlyVarying.tabulated(xs, 2.0 + np.sin(xs), "constant")
    assert not potter_check(wobble, 2.0, 0.1, 1e8).ok


def test_a_k_constant_L_exact():
    seq = NormalizingSequence(0.5, ONE)
    for k in (1, 7, 100, 12345):
        assert solve_a_k(seq, k) == pytest.approx(k**2, rel=1e-14)


def test_a_k_log_back_substitution():
    seq = NormalizingSequence(0.5, LN)
    a = solve_a_k(seq, 100)
    assert math.sqrt(a) == pytest.approx(100 * math.log(a), rel=1e-10)
    assert seq.A(a) / 100 == pytest.approx(1.0, abs=1e-8)


def test_a_k_increasing():
    seq = NormalizingSequence(0.7, SlowlyVarying.log_power(2.0))
    ks = np.geomspace(1, 1e6, 30)
    a = [solve_a_k(seq, k) for k in ks]
    assert all(b > a_ for a_, b in zip(a, a[1:]))


def test_a_k_fitted_index_constant_L():
    assert fitted_index(NormalizingSequence(0.5, ONE)) == pytest.approx(2.0, rel=0.02)
    assert fitted_index(NormalizingSequence(0.7, ONE)) == pytest.approx(1 / 0.7, rel=0.02)


def test_a_k_local_index_log_L():
    # a^b = k ln a gives d ln a / d ln k = 1/(b - 1/ln a)
    seq = NormalizingSequence(0.5, LN)
    k, eps = 1e4, 1e-4
    a0, a1 = solve_a_k(seq, k), solve_a_k(seq, k * math.exp(eps))
    slope = (math.log(a1) - math.log(a0)) / eps
    assert slope == pytest.approx(1 / (0.5 - 1 / math.log(a0)), rel=1e-4)


def test_karamata_constant_L():
    for beta in (0.3, 0.5, 0.7):
        assert karamata_sum_ratio(ONE, beta, 10**6) == pytest.approx(1.0, abs=0.02)


def test_karamata_log_L_within_two_percent():
    # listed tolerance; the 1/ln N correction makes this unattainable at N = 1e6
    assert karamata_sum_ratio(LN, 0.5, 10**6) == pytest.approx(1.0, abs=0.02)


def test_karamata_log_L_correction():
    # sum ln n / n^b = N^(1-b) ln N/(1-b) - N^(1-b)/(1-b)^2 + O(1)
    for beta in (0.3, 0.5):
        N = 10**6
        pred = 1.0 - 1.0 / ((1 - beta) * math.log(N))
        assert karamata_sum_ratio(LN, beta, N) == pytest.approx(pred, abs=2e-3)


def test_karamata_upper_tail():
    assert karamata_upper_tail_ratio(ONE, 1.5, 1e4) == pytest.approx(1.0, abs=0.01)
    assert karamata_upper_tail_ratio(ONE, 2.5, 1e4) == pytest.approx(1.0, abs=0.01)
    # log L: exact ratio 1 + 1/((b-1) ln x)
    x = 1e4
    assert karamata_upper_tail_ratio(LN, 1.5, x) == pytest.approx(1 + 2 / math.log(x), rel=1e-9)
