"""Schottky groups in ping-pong position and their symbolic coding.

Letters are (factor, power) pairs with power != 0. A word is a tuple of letters
with no two consecutive letters in the same factor. Arcs of the boundary
circle are closed; an arc with lo > hi wraps through infinity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .geometry import (BASE_POINT, INF, MoebiusMap, PlanePoint, busemann,
                       hyp_distance, is_infinite, translation_length,
                       visual_distance)


class Letter(NamedTuple):
    factor: int
    power: int


Word = tuple  # tuple[Letter, ...]


@dataclass(frozen=True)
class Arc:
    lo: float
    hi: float

    @property
    def wraps(self) -> bool:
        return self.lo > self.hi

    def contains(self, x: float, tol: float = 0.0) -> bool:
        if is_infinite(x):
            return self.wraps
        if self.wraps:
            return x >= self.lo - tol or x <= self.hi + tol
        return self.lo - tol <= x <= self.hi + tol

    def overlaps(self, other: "Arc") -> bool:
        probes = [self.lo, self.hi, other.lo, other.hi]
        return any(self.contains(p) and other.contains(p) for p in probes) or (
            self.wraps and other.wraps)


@dataclass(frozen=True)
class SchottkyFactor:
    kind: str
    generator: MoebiusMap
    domain: tuple  # tuple[Arc, ...]
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("parabolic", "hyperbolic"):
            raise ValueError(f"unknown factor kind {self.kind!r}")

    def in_domain(self, x: float, tol: float = 0.0) -> bool:
        return any(arc.contains(x, tol) for arc in self.domain)

    def fixed_points(self) -> tuple:
        g = self.generator
        if abs(g.c) < 1e-300:
            if self.kind == "parabolic":
                return (INF,)
            return (g.b / (g.d - g.a), INF)
        disc = (g.a + g.d) ** 2 - 4.0
        r = math.sqrt(max(disc, 0.0))
        f1 = (g.a - g.d - r) / (2.0 * g.c)
        f2 = (g.a - g.d + r) / (2.0 * g.c)
        return (f1,) if self.kind == "parabolic" else (f1, f2)

    def attractor(self) -> float:
        g = self.generator
        if self.kind == "parabolic":
            return self.fixed_points()[0]
        # attracting fixed point f has |g'(f)| = 1/(c f + d)^2 < 1
        for f in self.fixed_points():
            if is_infinite(f):
                if abs(g.a) > abs(g.d):
                    return f
            elif abs(g.c * f + g.d) > 1.0:
                return f
        raise ValueError("no attracting fixed point")

    def repeller(self) -> float:
        if self.kind == "parabolic":
            return self.fixed_points()[0]
        att = self.attractor()
        return next(f for f in self.fixed_points() if f != att)

    def backward_point(self, power: int) -> float:
        """Boundary limit of g^(-power) o as |power| grows."""
        return self.repeller() if power > 0 else self.attractor()


@dataclass
class SchottkyGroup:
    factors: list
    o: PlanePoint = BASE_POINT
    x0: float = 0.0625
    a: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def p(self) -> int:
        return sum(1 for f in self.factors if f.kind == "parabolic")

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    def require_spectral(self) -> None:
        if self.n_factors < 3:
            raise ValueError("spectral experiments need at least 3 factors")

    def letter_map(self, letter: Letter) -> MoebiusMap:
        key = ("L", letter)
        if key not in self._cache:
            self._cache[key] = self.factors[letter.factor].generator.power(letter.power)
        return self._cache[key]

    def word_map(self, word: Sequence[Letter]) -> MoebiusMap:
        g = MoebiusMap.identity()
        for letter in word:
            g = g @ self.letter_map(letter)
        return g

    def orbit_point(self, word: Sequence[Letter]) -> complex:
        return self.word_map(word).apply(self.o)

    def distance(self, word: Sequence[Letter]) -> float:
        return hyp_distance(self.o, self.orbit_point(word))

    def letter_distance(self, letter: Letter) -> float:
        key = ("D", letter)
        if key not in self._cache:
            self._cache[key] = self.distance((letter,))
        return self._cache[key]

    def apply_word(self, word: Sequence[Letter], x: float) -> float:
        for letter in reversed(word):
            x = self.letter_map(letter).apply_boundary(x)
        return x


def is_admissible(word: Sequence[Letter]) -> bool:
    return all(l.power != 0 for l in word) and all(
        u.factor != v.factor for u, v in zip(word, word[1:]))


# -- standard examples ----------------------------------------------------

PARABOLIC_DOMAIN = (Arc(1.0, 0.0),)
HYPERBOLIC_DOMAIN = (Arc(7 / 52, 25 / 76), Arc(37 / 52, 37 / 44))
THIRD_DOMAIN = (Arc(0.43, 0.46), Arc(0.55, 0.61))


def parabolic_translation() -> SchottkyFactor:
    return SchottkyFactor("parabolic", MoebiusMap.translation(1.0), PARABOLIC_DOMAIN, "p")


def conjugated_dilation(power: int = 1) -> SchottkyFactor:
    """gamma (64 z) gamma^-1 with gamma(z) = (3z/4 + 1/2)/(z + 2); fixed points 1/4 and 3/4."""
    gam = MoebiusMap.normalized(0.75, 0.5, 1.0, 2.0)
    h = gam @ MoebiusMap.dilation(64.0) @ gam.inverse()
    return SchottkyFactor("hyperbolic", h.power(power), HYPERBOLIC_DOMAIN, "h")


def third_factor(power: int = 1) -> SchottkyFactor:
    g = MoebiusMap.hyperbolic(0.45, 0.58, 64.0)
    return SchottkyFactor("hyperbolic", g.power(power), THIRD_DOMAIN, "k")


def standard_group(hyperbolic_power: int = 1, x0: float = 0.0625) -> SchottkyGroup:
    """Parabolic translation, the conjugated dilation and a third hyperbolic factor."""
    return SchottkyGroup([parabolic_translation(), conjugated_dilation(hyperbolic_power),
                          third_factor(hyperbolic_power)], x0=x0)


def paper_pair() -> SchottkyGroup:
    return SchottkyGroup([parabolic_translation(), conjugated_dilation()])


# -- ping-pong -------------------------------------------------------------

@dataclass
class PingPongReport:
    ok: bool
    checked: int
    first_violation: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def boundary_grid(n: int = 721) -> list:
    th = np.linspace(-math.pi / 2, math.pi / 2, n + 2)[1:-1]
    return [INF] + [float(v) for v in np.tan(th)]


def validate_ping_pong(group: SchottkyGroup, N: int, n_samples: int = 721,
                       tol: float = 1e-12) -> PingPongReport:
    if N < 1:
        raise ValueError("N must be >= 1")
    checked = 0
    fs = group.factors
    for i, j in itertools.combinations(range(len(fs)), 2):
        for u in fs[i].domain:
            for v in fs[j].domain:
                checked += 1
                if u.overlaps(v):
                    return PingPongReport(False, checked, f"domains of factors {i} and {j} overlap: {u} and {v}")
    for j, f in enumerate(fs):
        if f.in_domain(group.x0):
            return PingPongReport(False, checked, f"base point x0={group.x0} lies in domain of factor {j}")
    grid = boundary_grid(n_samples)
    for j, f in enumerate(fs):
        outside = [x for x in grid if not f.in_domain(x)]
        for n in itertools.chain.from_iterable((m, -m) for m in range(1, N + 1)):
            g = f.generator.power(n)
            for x in outside:
                checked += 1
                y = g.apply_boundary(x)
                if not f.in_domain(y, tol):
                    return PingPongReport(False, checked, f"factor {j} power {n}: x={x!r} maps to {y!r} outside its domain")
    return PingPongReport(True, checked)


# -- truncation and enumeration -----------------------------------------

@dataclass(frozen=True)
class TruncationScheme:
    M: int | None = None
    zeta: float | None = None
    max_power: int = 10_000

    def __post_init__(self):
        if (self.M is None) == (self.zeta is None):
            raise ValueError("give exactly one of M or zeta")
        if self.M is not None and self.M < 1:
            raise ValueError("M must be >= 1")
        if self.zeta is not None and not self.zeta > 0:
            raise ValueError("zeta must be positive")


def alphabet(group: SchottkyGroup, trunc: TruncationScheme) -> list:
    """Truncated letters ordered by factor, then |power|, then sign (+ before -)."""
    out = []
    for j in range(group.n_factors):
        m = 1
        while m <= trunc.max_power:
            if trunc.M is not None and m > trunc.M:
                break
            if trunc.zeta is not None and group.letter_distance(Letter(j, m)) > trunc.zeta:
                break
            out.append(Letter(j, m))
            out.append(Letter(j, -m))
            m += 1
    return out


def enumerate_words(group: SchottkyGroup, n: int, trunc: TruncationScheme) -> Iterator[tuple]:
    if n < 0:
        raise ValueError("n must be >= 0")
    letters = alphabet(group, trunc)

    def rec(prefix: tuple, k: int):
        if k == 0:
            yield prefix
            return
        last = prefix[-1].factor if prefix else -1
        for l in letters:
            if l.factor != last:
                yield from rec(prefix + (l,), k - 1)

    yield from rec((), n)


# -- coding --------------------------------------------------------------

@dataclass
class LimitPointResult:
    point: float
    prefix_images: list
    gaps: list
    rate: float | None
    constant: float | None
    converged: bool


def limit_point(group: SchottkyGroup, word: Sequence[Letter], x0: float | None = None,
                tol: float = 1e-6) -> LimitPointResult:
    """Image of x0 under the word, with the geometric contraction rate of prefixes."""
    x0 = group.x0 if x0 is None else x0
    images = [group.apply_word(word[:i], x0) for i in range(1, len(word) + 1)]
    if not images:
        return LimitPointResult(x0, [], [], None, None, True)
    gaps = [visual_distance(group.o, u, v) for u, v in zip(images, images[1:])]
    rate = const = None
    pos = [(i + 1, g) for i, g in enumerate(gaps) if g > 1e-15]
    if len(pos) >= 3:
        k = np.array([p[0] for p in pos], float)
        lg = np.log([p[1] for p in pos])
        slope, icpt = np.polyfit(k, lg, 1)
        rate, const = float(math.exp(slope)), float(math.exp(icpt))
    converged = (not gaps) or gaps[-1] < tol
    return LimitPointResult(images[-1], images, gaps, rate, const, converged)


def cocycle_b(group: SchottkyGroup, word: Sequence[Letter], x: float) -> float:
    """b(gamma, x) = Busemann at x of (gamma^-1 o, o)."""
    g = group.word_map(word)
    return busemann(x, g.inverse().apply(group.o), group.o)


def roof_birkhoff(group: SchottkyGroup, word: Sequence[Letter], k: int, x: float | None = None) -> float:
    """Birkhoff sum of the roof over k steps at the point coded by ``word``.

    The point defaults to word . x0, a finite-prefix approximation of the coded
    point. The sum telescopes to the Busemann function at x of (o, alpha_1..alpha_k o).
    """
    if len(word) < k:
        raise ValueError("prefix shorter than k")
    if x is None:
        x = group.apply_word(word, group.x0)
    return busemann(x, group.o, group.orbit_point(word[:k]))


def roof_values(group: SchottkyGroup, seq: Sequence[Letter]) -> np.ndarray:
    """Roof along the orbit x, Tx, T^2x, ... of the point coded by ``seq``.

    Entry i is the roof at T^i x, which only reads letter i+1.
    """
    n = len(seq)
    pts = [0.0] * (n + 1)
    pts[n] = group.x0
    for i in range(n - 1, -1, -1):
        pts[i] = group.letter_map(seq[i]).apply_boundary(pts[i + 1])
    o = group.o
    return np.array([busemann(pts[i], o, group.letter_map(seq[i]).apply(o)) for i in range(n)])


def default_tail(group: SchottkyGroup, after: int, length: int) -> tuple:
    """Deterministic admissible tail cycling through factors with power 1."""
    out, last = [], after
    for _ in range(length):
        j = (last + 1) % group.n_factors
        out.append(Letter(j, 1))
        last = j
    return tuple(out)


@dataclass
class PositiveRoof:
    k0: int
    samples: list
    min_roof: float
    identity_residual: float

    def roof(self, group: SchottkyGroup, seq: Sequence[Letter]) -> float:
        r = roof_values(group, seq)
        return float(np.sum(r[1:self.k0 + 1]) / self.k0)

    def transfer_function(self, group: SchottkyGroup, seq: Sequence[Letter]) -> float:
        r = roof_values(group, seq)
        return float(sum((1.0 - i / self.k0) * r[i] for i in range(self.k0)))


def make_positive_roof(group: SchottkyGroup, depth: int, trunc: TruncationScheme,
                       k_max: int = 64) -> PositiveRoof:
    """Smallest k0 with S_k0 roof > 0 on all depth-d cylinder samples."""
    samples = []
    for w in enumerate_words(group, max(depth, 1), trunc):
        samples.append(tuple(w) + default_tail(group, w[-1].factor, k_max + 2))
    vals = [roof_values(group, s) for s in samples]
    k0 = None
    for k in range(1, k_max + 1):
        if all(np.sum(v[:k]) > 0 and np.sum(v[1:k + 1]) > 0 for v in vals):
            k0 = k
            break
    if k0 is None:
        raise ValueError("roof not eventually positive at this truncation")
    pr = PositiveRoof(k0, samples, 0.0, 0.0)
    mins, res = [], []
    for s, v in zip(samples, vals):
        big = float(np.sum(v[1:k0 + 1]) / k0)
        f = sum((1.0 - i / k0) * v[i] for i in range(k0))
        fT = sum((1.0 - i / k0) * v[i + 1] for i in range(k0))
        mins.append(big)
        res.append(abs(v[0] - (big + f - fT)))
    pr.min_roof = float(min(mins))
    pr.identity_residual = float(max(res))
    return pr


def extended_cocycle(group: SchottkyGroup, gamma: Sequence[Letter], tail: Sequence[Letter]) -> float:
    """b*(gamma, g x0) = d(gamma^-1 o, g o) - d(o, g o) with g the tail word."""
    go = group.orbit_point(tail)
    gi = group.word_map(gamma).inverse().apply(group.o)
    return hyp_distance(gi, go) - hyp_distance(group.o, go)


# -- empirical constants ----------------------------------------------------

def words_up_to(group: SchottkyGroup, max_len: int, trunc: TruncationScheme) -> list:
    return [w for n in range(1, max_len + 1) for w in enumerate_words(group, n, trunc)]


def quasi_additivity_constant(group: SchottkyGroup, trunc: TruncationScheme, max_len: int = 2) -> float:
    """sup of d(o,g1 o) + d(o,g2 o) - d(o,g1 g2 o) over pairs with distinct junction factors."""
    words = words_up_to(group, max_len, trunc)
    dist = {w: group.distance(w) for w in words}
    worst = 0.0
    for w1 in words:
        for w2 in words:
            if w1[-1].factor != w2[0].factor:
                worst = max(worst, dist[w1] + dist[w2] - group.distance(w1 + w2))
    return worst


def cocycle_constant(group: SchottkyGroup, trunc: TruncationScheme, max_len: int = 4,
                     n_grid: int = 41) -> float:
    """sup |b(g,x) - d(o,g o)| for x outside the domain of the last letter of g."""
    grid = boundary_grid(n_grid)
    worst = 0.0
    for w in words_up_to(group, max_len, trunc):
        g = group.word_map(w)
        gio = g.inverse().apply(group.o)
        d = hyp_distance(group.o, gio)
        dom = group.factors[w[-1].factor]
        for x in grid:
            if not dom.in_domain(x):
                worst = max(worst, abs(busemann(x, gio, group.o) - d))
    return worst


def extended_constant(group: SchottkyGroup, trunc: TruncationScheme, max_len: int = 2) -> float:
    """sup |b*(g, h x0) - d(o, g o)| over pairs with i(h) != l(g)."""
    words = [()] + words_up_to(group, max_len, trunc)
    worst = 0.0
    for g in words[1:]:
        d = group.distance(g)
        for h in words:
            if h and h[0].factor == g[-1].factor:
                continue
            worst = max(worst, abs(extended_cocycle(group, g, h) - d))
    return worst


def periodic_translation_length(group: SchottkyGroup, word: Sequence[Letter]) -> float:
    return translation_length(group.word_map(word))
