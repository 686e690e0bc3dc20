"""Acceptance run: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines; they are
printed with capture disabled, so they also show in a plain ``pytest -v``.
"""

import configparser
import filecmp
import math
import random
import time

import numpy as np
import pytest
from scipy import optimize

from cuspcount import asymptotics as asy
from cuspcount import cli
from cuspcount import geometry as geo
from cuspcount import regvar as rv
from cuspcount import schottky as sk
from cuspcount import stablelaw as sl
from cuspcount import transfer as tr


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


def config(text=""):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string(text)
    return cli.Config(parser)


def checks_ok(res):
    return all(ok for *_, ok in res.checks)


def checks_text(res):
    return ", ".join(f"{name}={cli._fmt(val)}" for name, val, _, _ in res.checks)


def test_criterion_01_geometry_oracle(report):
    t0 = time.perf_counter()
    res = cli.run_geometry_check(config("[experiment]\nn_pairs = 10000\n"), 1, 1)
    dt = time.perf_counter() - t0
    err = max(r[-1] for r in res.rows)
    ok = err < 1e-6 and dt < 60.0
    assert report(1, ok, f"max |error| = {err:.3g} over 10^4 pairs, {dt:.1f} s")


def test_criterion_02_cusp_distance_residual(report):
    res = cli.run_cusp_distances(config("[experiment]\nn_max = 1e6\nresidual_tolerance = 0.1\n"), 1, 1)
    ns = np.array([r[0] for r in res.rows])
    eps = np.array([r[4] for r in res.rows])
    tail = np.abs(eps[ns >= 1e4])
    decreasing = bool(np.all(np.diff(tail) <= 0))
    final = abs(float(eps[-1]))
    ok = decreasing and final < 0.1
    assert report(2, ok, f"|eps(1e6)| = {final:.3f} (want < 0.1), decreasing over last two decades: {decreasing}")


def test_criterion_03_tail_hypotheses(report):
    res = cli.run_tails(config("[experiment]\nT_min = 20\nT_max = 40\n"), 1, 1)
    tail = np.array([r[1] for r in res.rows])
    ok = checks_ok(res)
    assert report(3, ok, f"tail ratio in [{tail.min():.3f}, {tail.max():.3f}], "
                         f"annulus C = {res.constants['annulus_C']:.4f}, {checks_text(res)}")


def test_criterion_04_stable_law(report):
    p = sl.StableParams(0.5)
    x = np.linspace(0.05, 10.0, 400)
    sup = float(np.max(np.abs(sl.density(p, x) - sl.levy_density(x, sl.levy_scale_from_laplace(0.5)))))
    wi = {b: abs(sl.weighted_integral(sl.StableParams(b)).value - math.sin(b * math.pi) / (b * math.pi))
          for b in (0.3, 0.5, 0.7)}
    mass = {b: abs(sl.total_mass(sl.StableParams(b)) - 1.0) for b in (0.3, 0.5, 0.7)}
    ok = sup < 1e-4 and max(wi.values()) < 1e-3 and max(mass.values()) < 1e-4
    assert report(4, ok, f"Levy sup error {sup:.2g}, weighted integral error {max(wi.values()):.2g}, "
                         f"mass error {max(mass.values()):.2g}")


def _synthetic_gromov_family(group, depth=1):
    def rad(c):
        m, _ = tr.exotic_model(group, "synthetic", offset=c)
        return tr.OperatorFamily(group, m, M=8, depth=depth).radius(0.5) - 1.0
    c = optimize.brentq(rad, 0.0, 10.0, xtol=1e-12)
    m, _ = tr.exotic_model(group, "synthetic", offset=c)
    return tr.OperatorFamily(group, m, M=8, depth=depth), c


def test_criterion_05_critical_exponent(report):
    ell = math.log(64.0)
    g2 = sk.SchottkyGroup([sk.conjugated_dilation(), sk.third_factor()])
    two = tr.DistanceModel("additive", [tr.HyperbolicSpectrum(ell)] * 2, [0.0, 0.0])
    d2 = tr.estimate_delta(tr.OperatorFamily(g2, two), tol=1e-9)
    err2 = abs(d2 - math.log(3.0) / ell)
    group = sk.standard_group()
    model, _ = tr.exotic_model(group)
    dex = tr.estimate_delta(tr.OperatorFamily(group, model), 0.3, 2.0, tol=1e-9)
    fam_g, _ = _synthetic_gromov_family(group)
    dg = tr.estimate_delta(fam_g, 0.3, 2.0, tol=1e-9)
    ok = err2 < 1e-4 and abs(dex - 0.5) < 1e-3
    assert report(5, ok, f"two-factor |delta - ln3/l| = {err2:.2g}; exotic additive delta = {dex:.7f}; "
                         f"exotic Gromov-corrected delta = {dg:.7f}")


def test_criterion_06_local_expansion(report):
    group = sk.standard_group()
    parts, ok = [], True
    for beta in (0.4, 0.6):
        model, _ = tr.exotic_model(group, beta=beta)
        fam = tr.OperatorFamily(group, model)
        tab = tr.lambda_curve(fam, 0.5, np.geomspace(1e-6, 1e-4, 11))
        fit = tr.fit_local_expansion(tab)
        rel = abs(fit.beta - beta) / beta
        ph = abs(fit.phase - beta * math.pi / 2.0)
        ok &= rel < 0.05 and ph < 0.1
        parts.append(f"beta={beta}: fit {fit.beta:.4f} ({100 * rel:.1f}%), phase error {ph:.3f} rad")
    assert report(6, ok, "; ".join(parts))


def _E_pair(fam):
    E = tr.estimate_EGamma(fam, 0.5)
    tab = tr.lambda_curve(fam, 0.5, np.geomspace(1e-7, 1e-5, 9))
    return E, tr.fit_local_expansion(tab).amplitude / math.gamma(0.5)


def test_criterion_07_EGamma_consistency(report):
    group = sk.standard_group()
    model, _ = tr.exotic_model(group)
    E_a, F_a = _E_pair(tr.OperatorFamily(group, model))
    fam_g, c = _synthetic_gromov_family(group)
    E_g, F_g = _E_pair(fam_g)
    ra, rg = abs(E_a / F_a - 1.0), abs(E_g / F_g - 1.0)
    ok = ra < 0.2 and rg < 0.2
    assert report(7, ok, f"additive: formula {E_a:.4f} vs fit {F_a:.4f} ({100 * ra:.1f}%); "
                         f"Gromov-corrected (offset {c:.3f}): {E_g:.4f} vs {F_g:.4f} ({100 * rg:.1f}%)")


def test_criterion_08_hstar_calibration(report):
    res = cli.run_calibrate(config("[group]\nhyperbolic_power = 2\n[experiment]\nh0 = 30\n"), 1, 1)
    ok = checks_ok(res)
    assert report(8, ok, f"h* = {res.constants['h_star']:.4f}, deeper {res.constants['h_star_deeper']:.4f}, "
                         f"{checks_text(res)}")


def test_criterion_09_orbit_counting(report):
    group = sk.standard_group()
    C = sk.quasi_additivity_constant(group, sk.TruncationScheme(M=6))
    Rs = np.arange(0.25, 8.001, 0.25)
    bad = [R for R in Rs if asy.orbit_count_exact(group, R, C) != asy.orbit_count_box(group, R, 3, (60, 4, 4))]
    n8 = asy.orbit_count_exact(group, 8.0, C)
    res = cli.run_count_orbits(config("[experiment]\nR_max = 200\nstep = 2e-3\n"), 1, 1)
    cv, rel = (v for _, v, _, _ in res.checks)
    ok = not bad and checks_ok(res)
    assert report(9, ok, f"exact: {len(Rs) - len(bad)}/{len(Rs)} radii agree with brute force (N(8) = {n8}); "
                         f"additive: window CV {cv:.2g}, level error {100 * rel:.1f}%")


def test_criterion_10_local_limit(report):
    res = cli.run_local_limit(config(), 1, 1)
    err = res.checks[0][1]
    assert report(10, checks_ok(res), f"mean relative error {100 * err:.2f}% over k in [30, 80]")


def test_criterion_11_geodesic_counting(report):
    b = cli.run_count_geodesics(config("[experiment]\nR_max = 100\n"), 1, 1)
    r = cli.run_count_geodesics(config("[model]\nkind = roblin\n[experiment]\nR_max = 60\n"), 1, 1)
    ok = checks_ok(b) and checks_ok(r)
    assert report(11, ok, f"lower-bound ratio at R=100: {b.checks[0][1]:.3f}; "
                          f"convex-cocompact max deviation {r.checks[0][1]:.3f}")


def _random_word(rng, group, n, M=3, last=-1):
    w = []
    for _ in range(n):
        j = rng.choice([k for k in range(group.n_factors) if k != last])
        w.append(sk.Letter(j, rng.choice([m for m in range(-M, M + 1) if m])))
        last = j
    return tuple(w)


def _cond(g, der):
    return math.sqrt(g.a**2 + g.b**2 + g.c**2 + g.d**2) * math.sqrt(der) + 1.0


def test_criterion_12_property_suites(report, tmp_path):
    rng = random.Random(12)
    nrng = np.random.default_rng(12)
    group = sk.standard_group()
    viol = {}

    # Busemann cocycle
    v = 0
    for _ in range(2000):
        xi = float(nrng.uniform(-5, 5))
        p, q, r = (complex(nrng.uniform(-3, 3), math.exp(nrng.uniform(-2, 2))) for _ in range(3))
        v += abs(geo.busemann(xi, p, q) - geo.busemann(xi, p, r) - geo.busemann(xi, r, q)) > 1e-9
    viol["busemann"] = v

    # conformal chain rule on group elements
    v = 0
    for _ in range(1000):
        g1, g2 = group.word_map(_random_word(rng, group, 2)), group.word_map(_random_word(rng, group, 2))
        x = float(nrng.uniform(-3, 3))
        y = g2.apply_boundary(x)
        if not math.isfinite(y) or abs(y) > 1e6:
            continue
        d1, d2 = geo.conformal_derivative(g1, y), geo.conformal_derivative(g2, x)
        lhs, rhs = geo.conformal_derivative(g1 @ g2, x), d1 * d2
        # float words lose eps |g| sqrt(g') relative accuracy to cancellation in ax + b
        kappa = _cond(g1, d1) + _cond(g2, d2) + _cond(g1 @ g2, lhs)
        v += abs(lhs - rhs) > (1e-10 + 100 * np.finfo(float).eps * kappa) * abs(rhs)
    viol["chain_rule"] = v

    viol["ping_pong"] = int(not sk.validate_ping_pong(group, 4)) + int(not sk.validate_ping_pong(sk.paper_pair(), 8))

    # b additivity and b* decomposition and boundedness
    v = 0
    for _ in range(1000):
        g1 = _random_word(rng, group, rng.randint(1, 3))
        g2 = _random_word(rng, group, rng.randint(1, 3), last=g1[-1].factor)
        x = rng.uniform(-5, 5)
        lhs = sk.cocycle_b(group, g1 + g2, x)
        v += abs(lhs - sk.cocycle_b(group, g1, group.apply_word(g2, x)) - sk.cocycle_b(group, g2, x)) > 1e-9
        lhs = sk.extended_cocycle(group, g1 + g2, ())
        v += abs(lhs - sk.extended_cocycle(group, g1, g2) - sk.extended_cocycle(group, g2, ())) > 1e-9
    Cb = sk.cocycle_constant(sk.paper_pair(), sk.TruncationScheme(M=2), max_len=4, n_grid=21)
    Ce = sk.extended_constant(group, sk.TruncationScheme(M=2), max_len=2)
    for _ in range(200):
        g, t = _random_word(rng, group, 2, M=2), _random_word(rng, group, 2, M=2)
        if t[0].factor != g[-1].factor:
            v += abs(sk.extended_cocycle(group, g, t) - group.distance(g)) > Ce + 1e-9
    v += not (0 < Cb <= 10)
    viol["cocycles"] = v

    # Karamata and Potter grids
    one, ln = rv.SlowlyVarying.one(), rv.SlowlyVarying.log_power(1.0)
    kar = {(name, b): rv.karamata_sum_ratio(L, b, 10**6) for name, L in (("1", one), ("ln", ln)) for b in (0.3, 0.5)}
    viol["karamata"] = sum(abs(r - 1.0) > 0.02 for r in kar.values())
    viol["potter"] = int(not rv.potter_check(one, 1.5, 0.1, 1e8).ok) + int(not rv.potter_check(ln, 2.0, 0.1, 1e8).ok)

    # transfer duality at the critical exponent
    model, _ = tr.exotic_model(group)
    dual = tr.duality_residual(tr.OperatorFamily(group, model), 0.5)
    viol["duality"] = int(dual >= 1e-10)

    # CSV determinism
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = tmp_path / "g.ini"
    cfg.write_text("[experiment]\nn_pairs = 500\n")
    for out in (a, b):
        cli.main(["geometry-check", "--config", str(cfg), "--out", str(out), "--threads", "2"])
    viol["determinism"] = int(not filecmp.cmp(a / "results.csv", b / "results.csv", shallow=False))

    ok = not any(viol.values())
    worst_ln = max(abs(kar[("ln", b)] - 1.0) for b in (0.3, 0.5))
    assert report(12, ok, "violations " + ", ".join(f"{k}={n}" for k, n in viol.items())
                  + f" (Karamata L=ln ratio off by {100 * worst_ln:.1f}%)")
