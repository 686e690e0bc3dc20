import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from cuspcount.asymptotics import (Grid, NodeBudgetExceeded, TestFunction as Bump, W_k_profile, _mobius,
                                   geodesic_count_exact, geodesic_counts_additive, level_bound_constant,
                                   level_measures, mixing_correlation, mixing_time_domain, orbit_count_box,
                                   orbit_count_exact, orbit_counts_additive)
from cuspcount.geometry import translation_length
from cuspcount.regvar import NormalizingSequence, SlowlyVarying
from cuspcount.schottky import (Letter, SchottkyGroup, TruncationScheme, conjugated_dilation,
                                parabolic_translation, quasi_additivity_constant, standard_group,
                                third_factor)
from cuspcount.transfer import HyperbolicSpectrum, OperatorFamily, eigendata, exotic_model

GROUP = standard_group()
C_QA = quasi_additivity_constant(GROUP, TruncationScheme(M=3))
SPECTRA = [HyperbolicSpectrum(lam) for lam in (1.0, 1.5, 2.0)]
UNITS = (2, 3, 4)  # letter lengths in units of 0.5


def _min_letter_distance(group):
    return min(group.letter_distance(Letter(j, 1)) for j in range(group.n_factors))


def test_count_below_first_letter_is_one():
    r0 = _min_letter_distance(GROUP)
    assert r0 == pytest.approx(0.9624, abs=1e-3)
    assert orbit_count_exact(GROUP, 0.9 * r0, C_QA) == 1
    assert orbit_count_exact(GROUP, 0.0, C_QA) == 1


def test_count_monotone_in_R():
    counts = [orbit_count_exact(GROUP, R, C_QA) for R in np.arange(0.5, 7.01, 0.5)]
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    assert counts[-1] > counts[0]


@pytest.mark.parametrize("R", [2.0, 4.0, 6.0, 8.0])
def test_pruned_equals_brute_force(R):
    assert orbit_count_exact(GROUP, R, C_QA) == orbit_count_box(GROUP, R, 3, (60, 4, 4))


def test_node_budget():
    with pytest.raises(NodeBudgetExceeded) as exc:
        orbit_count_exact(GROUP, 8.0, C_QA, node_budget=10)
    assert exc.value.nodes == 11


def test_negative_radius_rejected():
    with pytest.raises(ValueError):
        orbit_count_exact(GROUP, -1.0, C_QA)


def _trace_pair_count(group, R, caps):
    """Two-letter closed geodesics from explicit traces; tr(T^m H) = a + d + m c for the unit translation."""
    count = 0
    for j, k in itertools.combinations(range(group.n_factors), 2):
        for m in range(1, caps[j] + 1):
            for n in range(1, caps[k] + 1):
                for sm, sn in itertools.product((1, -1), repeat=2):
                    H = group.letter_map(Letter(k, sn * n))
                    if group.factors[j].kind == "parabolic":
                        tr = H.a + H.d + sm * m * H.c
                    else:
                        G = group.letter_map(Letter(j, sm * m))
                        tr = G.a * H.a + G.b * H.c + G.c * H.b + G.d * H.d
                    if abs(tr) > 2.0 and 2.0 * math.acosh(abs(tr) / 2.0) <= R:
                        count += 1
    return count


@pytest.mark.parametrize("R", [5.0, 9.0, 12.0])
def test_two_letter_geodesics_from_traces(R):
    caps = (40, 3, 3)
    assert geodesic_count_exact(GROUP, R, 2, caps) == _trace_pair_count(GROUP, R, caps)


def test_counts_invariant_under_relabeling():
    f = [parabolic_translation(), conjugated_dilation(), third_factor()]
    perm = (2, 0, 1)
    other = SchottkyGroup([f[i] for i in perm])
    caps = (20, 2, 2)
    caps_perm = tuple(caps[i] for i in perm)
    for R in (6.0, 10.0):
        assert geodesic_count_exact(GROUP, R, 3, caps) == geodesic_count_exact(other, R, 3, caps_perm)
    assert orbit_count_exact(GROUP, 6.0, C_QA) == orbit_count_exact(other, 6.0, C_QA)


# -- additive mode against direct enumeration ---------------------------------

def _brute_orbit_counts(units, n_max):
    """Reduced words with letters (j, +-m) of length m * units[j], counted by total length (in units)."""
    # ends[j][l] = number of nonempty reduced words ending in factor j with total length l
    ends = [np.zeros(n_max + 1) for _ in units]
    for l in range(1, n_max + 1):
        for j, u in enumerate(units):
            total = 0.0
            for m in range(1, l // u + 1):
                rest = l - m * u
                prev = 1.0 if rest == 0 else sum(ends[i][rest] for i in range(len(units)) if i != j)
                total += 2.0 * prev
            ends[j][l] = total
    per_len = sum(ends)
    per_len[0] = 1.0
    return np.cumsum(per_len)


def test_additive_orbit_counts_exact_on_grid():
    step, R_max = 0.5, 12.0
    run = orbit_counts_additive(SPECTRA, 0.3, R_max, step)
    ref = _brute_orbit_counts(UNITS, int(R_max / step))
    assert run.R.size == ref.size
    assert np.allclose(run.counts, ref, rtol=1e-9)


def _necklace_count(units, R_units):
    """Primitive cyclically reduced words of >= 2 letters up to rotation, oriented, by enumeration."""
    letters = [(j, s * m) for j, u in enumerate(units) for m in range(1, R_units // u + 1) for s in (1, -1)]
    length = {a: abs(a[1]) * units[a[0]] for a in letters}
    seen = set()

    def rec(word, total):
        if len(word) >= 2 and word[0][0] != word[-1][0]:
            rots = {word[r:] + word[:r] for r in range(len(word))}
            if len(rots) == len(word):
                seen.add(min(rots))
        for a in letters:
            if a[0] != word[-1][0] and total + length[a] <= R_units:
                rec(word + (a,), total + length[a])

    for a in letters:
        rec((a,), length[a])
    return len(seen)


@pytest.mark.parametrize("R", [4.0, 6.0, 8.0])
def test_additive_geodesic_counts_match_necklaces(R):
    step = 0.5
    run = geodesic_counts_additive(SPECTRA, 0.3, 8.0, step)
    i = int(round(R / step))
    assert run.counts[i] == pytest.approx(_necklace_count(UNITS, i), rel=1e-9)


def test_mobius_values():
    assert [_mobius(n) for n in range(1, 11)] == [1, -1, -1, 0, -1, 1, -1, 0, 0, 1]


# -- level sums and test functions ----------------------------------------------

def test_single_letter_level_by_hand():
    delta, step = 0.4, 0.5
    grid = Grid.up_to(10.0, step)
    levels = level_measures(SPECTRA, delta, grid, 2)
    u = Bump("bump", 0.75)
    R = np.array([1.0, 2.2, 3.0, 5.5])
    got = W_k_profile(levels[0], grid, R, u, delta)
    want = []
    for r in R:
        tot = 0.0
        for sp in SPECTRA:
            for m in range(1, 20):
                l = float(sp.lengths(m))
                tot += 2.0 * math.exp(-delta * l) * float(u(l - r))
        want.append(tot)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-15)


def test_level_masses_follow_matrix_powers():
    delta, step = 0.4, 0.5
    grid = Grid.up_to(120.0, step)
    levels = level_measures(SPECTRA, delta, grid, 3)
    m = np.array([float(np.real(sp.transform(delta)[0])) for sp in SPECTRA])
    # v[i] = tilted mass of k-letter words ending in factor i
    v = m.copy()
    for k in range(3):
        assert levels[k].sum() == pytest.approx(v.sum(), rel=1e-8)
        v = m * (v.sum() - v)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["bump", "indicator"]), st.floats(0.2, 3.0), st.floats(-2.0, 2.0), st.floats(-4.0, 4.0))
def test_fourier_transform_matches_quadrature(kind, half, center, t):
    u = Bump(kind, half, center)
    lo, hi = center - half, center + half
    re, _ = integrate.quad(lambda x: float(u(x)) * math.cos(t * x), lo, hi, epsabs=1e-12, limit=200)
    im, _ = integrate.quad(lambda x: -float(u(x)) * math.sin(t * x), lo, hi, epsabs=1e-12, limit=200)
    got = complex(u.fourier(t))
    assert abs(got - complex(re, im)) < 1e-8


def test_test_function_validation():
    with pytest.raises(ValueError):
        Bump("gauss", 1.0)
    with pytest.raises(ValueError):
        Bump("bump", 0.0)
    assert Bump("bump", 2.0).mass() == pytest.approx(2.0)
    assert Bump("indicator", 2.0).mass() == pytest.approx(4.0)


def test_level_bound_constant_finite():
    model, _ = exotic_model(GROUP)
    beta = 0.5
    seq = NormalizingSequence(beta, SlowlyVarying.one())
    grid = Grid.up_to(3.0 * seq(20) + 10.0, 0.05)
    levels = level_measures(model.spectra, 0.5, grid, 20)
    C = level_bound_constant(levels, grid, range(5, 21), seq, beta, None, Bump("bump", 1.0), 0.5)
    assert 0.0 < C < 50.0


# -- mixing ---------------------------------------------------------------------

MODEL, _ = exotic_model(GROUP)
FAMILY = OperatorFamily(GROUP, MODEL)


def test_mixing_is_linear_in_the_test_function():
    Rs = np.array([20.0, 60.0])
    u, v = Bump("bump", 1.0), Bump("bump", 1.0, height=2.0)
    M1 = mixing_correlation(FAMILY, 0.5, Rs, u, u)
    M2 = mixing_correlation(FAMILY, 0.5, Rs, u, v)
    assert np.allclose(M2, 2.0 * M1, rtol=1e-12)


def test_mixing_vanishes_below_support():
    u = Bump("bump", 1.0)
    M = mixing_correlation(FAMILY, 0.5, np.array([-10.0]), u, u)
    ref = mixing_correlation(FAMILY, 0.5, np.array([20.0]), u, u)
    assert abs(M[0]) < 1e-4 * ref[0]


def test_mixing_resolvent_matches_time_domain():
    sd = eigendata(FAMILY.matrix(0.5))
    u = Bump("bump", 1.0)
    Rs = np.array([30.0, 100.0])
    fr = mixing_correlation(FAMILY, 0.5, Rs, u, u)
    td = mixing_time_domain(MODEL.spectra, 0.5, np.real(sd.sigma), np.real(sd.h), Rs, u, u, step=1e-3)
    assert np.allclose(fr, td, rtol=1e-4)


def test_two_letter_counts_are_translation_lengths():
    # a spot check of the convention: each counted class has translation length <= R
    R = 6.0
    g = GROUP.word_map([Letter(0, 1), Letter(1, 1)])
    assert translation_length(g) > 0
    n = geodesic_count_exact(GROUP, translation_length(g) + 1e-9, 2, (10, 2, 2))
    assert n >= 1
    assert geodesic_count_exact(GROUP, R, 2, (10, 2, 2)) <= geodesic_count_exact(GROUP, R + 1.0, 2, (10, 2, 2))
