import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cuspcount.geometry import INF, MoebiusMap, hyp_distance, translation_length
from cuspcount.schottky import (Arc, Letter, SchottkyFactor, SchottkyGroup, TruncationScheme,
                                alphabet, cocycle_b, cocycle_constant, enumerate_words,
                                extended_constant, extended_cocycle, is_admissible, limit_point,
                                make_positive_roof, paper_pair, quasi_additivity_constant,
                                roof_birkhoff, roof_values, standard_group, validate_ping_pong)

PAIR = paper_pair()
GROUP = standard_group()


def random_word(rng, group, n, M=3, last=-1):
    w = []
    for _ in range(n):
        j = rng.choice([k for k in range(group.n_factors) if k != last])
        w.append(Letter(j, rng.choice([m for m in range(-M, M + 1) if m])))
        last = j
    return tuple(w)


_QA = []


def qa_constant():
    if not _QA:
        _QA.append(quasi_additivity_constant(GROUP, TruncationScheme(M=3)))
    return _QA[0]


word_st = st.lists(st.tuples(st.integers(0, 2), st.sampled_from([-3, -2, -1, 1, 2, 3])),
                   min_size=1, max_size=5).map(
    lambda ls: tuple(Letter(j, m) for k, (j, m) in enumerate(ls) if k == 0 or ls[k - 1][0] != j))


def test_ping_pong_paper_pair():
    assert validate_ping_pong(PAIR, 8)
    assert validate_ping_pong(GROUP, 4)


def test_ping_pong_overlapping_domains():
    bad = SchottkyFactor("hyperbolic", MoebiusMap.hyperbolic(0.2, 0.8, 64.0), (Arc(0.1, 0.3), Arc(0.7, 1.2)))
    rep = validate_ping_pong(SchottkyGroup([PAIR.factors[0], bad]), 2)
    assert not rep
    assert "overlap" in rep.first_violation


def test_ping_pong_shrunk_parabolic_domain():
    p = SchottkyFactor("parabolic", MoebiusMap.translation(1.0), (Arc(2.0, 3.0),))
    rep = validate_ping_pong(SchottkyGroup([p, PAIR.factors[1]], x0=5.0), 2)
    assert not rep


def test_ping_pong_rejects_bad_N():
    with pytest.raises(ValueError):
        validate_ping_pong(PAIR, 0)


def test_hyperbolic_fixed_points():
    assert sorted(PAIR.factors[1].fixed_points()) == pytest.approx([0.25, 0.75], abs=1e-12)


def test_enumerate_counts():
    tr = TruncationScheme(M=2)
    assert list(enumerate_words(GROUP, 0, tr)) == [()]
    words = list(enumerate_words(GROUP, 2, tr))
    assert len(words) == 96
    assert all(is_admissible(w) for w in words)
    assert len(set(words)) == 96


def test_alphabet_order():
    letters = alphabet(GROUP, TruncationScheme(M=2))
    assert letters[:4] == [Letter(0, 1), Letter(0, -1), Letter(0, 2), Letter(0, -2)]


def test_truncation_by_distance():
    tr = TruncationScheme(zeta=8.0)
    assert all(GROUP.letter_distance(l) <= 8.0 for l in alphabet(GROUP, tr))
    with pytest.raises(ValueError):
        TruncationScheme(M=2, zeta=1.0)


def test_limit_point_hyperbolic_powers():
    res = limit_point(PAIR, (Letter(1, 1),) * 20, x0=INF)
    assert res.point == pytest.approx(0.75, abs=1e-6)


def test_limit_point_alternating_geometric():
    res = limit_point(PAIR, (Letter(0, 1), Letter(1, 1)) * 15)
    assert res.rate is not None and res.rate < 1.0
    assert res.converged


def test_limit_point_empty():
    assert limit_point(PAIR, ()).point == PAIR.x0


def test_cocycle_identity_zero():
    assert cocycle_b(GROUP, (), 0.3) == 0.0


def test_cocycle_additive_random():
    rng = random.Random(1)
    for _ in range(1000):
        g1 = random_word(rng, GROUP, rng.randint(1, 3))
        g2 = random_word(rng, GROUP, rng.randint(1, 3), last=g1[-1].factor)
        x = rng.uniform(-5, 5)
        lhs = cocycle_b(GROUP, g1 + g2, x)
        rhs = cocycle_b(GROUP, g1, GROUP.apply_word(g2, x)) + cocycle_b(GROUP, g2, x)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_cocycle_constant_bounded():
    C = cocycle_constant(PAIR, TruncationScheme(M=2), max_len=4, n_grid=21)
    assert 0 < C <= 10


def test_roof_periodic_matches_translation_length():
    # word h p repeated: the Birkhoff sum over a period tends to the translation length
    w = (Letter(1, 1), Letter(0, 1))
    seq = w * 30
    r = roof_values(PAIR, seq)
    assert r[0] + r[1] == pytest.approx(translation_length(PAIR.word_map(w)), abs=1e-6)


def test_roof_birkhoff_lower_bound():
    C = cocycle_constant(GROUP, TruncationScheme(M=2), max_len=3, n_grid=21)
    rng = random.Random(2)
    for _ in range(50):
        w = random_word(rng, GROUP, 8)
        for k in (1, 2, 3):
            pref = w[:k]
            d = hyp_distance(GROUP.o, GROUP.word_map(pref).apply(GROUP.o))
            assert roof_birkhoff(GROUP, w, k) >= d - C - 1e-9


def test_positive_roof():
    pr = make_positive_roof(GROUP, 1, TruncationScheme(M=2))
    assert pr.k0 >= 1
    assert pr.min_roof > 0
    assert pr.identity_residual < 1e-9


def test_extended_cocycle_empty_tail():
    w = (Letter(0, 2), Letter(1, -1))
    assert extended_cocycle(GROUP, w, ()) == pytest.approx(GROUP.distance(w), abs=1e-12)


def test_extended_cocycle_additive_and_decomposition():
    rng = random.Random(3)
    for _ in range(1000):
        g = random_word(rng, GROUP, rng.randint(1, 3))
        t = random_word(rng, GROUP, rng.randint(1, 3), last=g[-1].factor)
        lhs = extended_cocycle(GROUP, g + t, ())
        rhs = extended_cocycle(GROUP, g, t) + extended_cocycle(GROUP, t, ())
        assert lhs == pytest.approx(rhs, abs=1e-9)
    w = random_word(rng, GROUP, 5)
    parts = sum(extended_cocycle(GROUP, w[i:i + 1], w[i + 1:]) for i in range(len(w)))
    assert parts == pytest.approx(GROUP.distance(w), abs=1e-9)


def test_extended_constant_bound():
    C = extended_constant(GROUP, TruncationScheme(M=2), max_len=2)
    rng = random.Random(4)
    for _ in range(200):
        g = random_word(rng, GROUP, 2, M=2)
        t = random_word(rng, GROUP, 2, M=2)
        if t[0].factor == g[-1].factor:
            continue
        assert abs(extended_cocycle(GROUP, g, t) - GROUP.distance(g)) <= C + 1e-9


@settings(max_examples=200, deadline=None)
@given(word_st, word_st)
def test_quasi_additivity(w1, w2):
    C = qa_constant()
    if w1[-1].factor == w2[0].factor:
        return
    assert GROUP.distance(w1 + w2) >= GROUP.distance(w1) + GROUP.distance(w2) - C - 1e-9


@settings(max_examples=100, deadline=None)
@given(word_st)
def test_words_map_into_first_domain(w):
    x = GROUP.x0
    if GROUP.factors[w[-1].factor].in_domain(x):
        return
    y = GROUP.apply_word(w, x)
    assert GROUP.factors[w[0].factor].in_domain(y, 1e-9)


def test_contraction_of_cylinders():
    # images of the boundary outside the last domain under longer and longer prefixes
    word = (Letter(1, 1), Letter(0, 1), Letter(2, -1)) * 3
    xs = np.linspace(-20.0, 20.0, 801)
    diam = []
    for n in range(1, len(word) + 1):
        dom = GROUP.factors[word[n - 1].factor]
        pts = [GROUP.apply_word(word[:n], x) for x in xs if not dom.in_domain(x)]
        diam.append(max(pts) - min(pts))
    assert all(b < a for a, b in zip(diam, diam[1:]))
    rate = (diam[-1] / diam[0]) ** (1 / (len(diam) - 1))
    assert rate < 0.5
