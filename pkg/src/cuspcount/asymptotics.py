"""Orbit and closed-geodesic counting, level sums and local-limit checks.

Two counting modes.

exact      words are multiplied out as matrices and d(o, gamma o) is exact.
           Branch-and-bound prunes a word once d(o, gamma o) - C > R, where C
           is the quasi-additivity constant: every extension gamma w satisfies
           d(o, gamma w o) >= d(o, gamma o) + d(o, w o) - C.
additive   d(o, gamma o) is the sum of letter lengths. Counting uses binned
           letter measures where each letter carries e^{-delta l} at its true
           length and only its position is rounded to the bin grid, so the
           tilted model stays exactly critical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import translation_length
from .schottky import Letter, SchottkyGroup
from .stablelaw import StableParams, density


# -- exact mode ---------------------------------------------------------------

class NodeBudgetExceeded(RuntimeError):
    def __init__(self, partial: int, nodes: int):
        super().__init__(f"node budget exhausted after {nodes} nodes; partial count {partial}")
        self.partial, self.nodes = partial, nodes


def _cosh_distance(M: np.ndarray) -> float:
    """cosh d(i, g i) = (a^2 + b^2 + c^2 + d^2)/2 for g in SL(2,R)."""
    return 0.5 * float(np.sum(M * M))


def _letter_matrices(group: SchottkyGroup, max_power) -> list:
    caps = _per_factor(group, max_power)
    out = []
    for j in range(group.n_factors):
        for m in range(1, caps[j] + 1):
            for sgn in (1, -1):
                g = group.letter_map(Letter(j, sgn * m))
                out.append((j, sgn * m, np.array([[g.a, g.b], [g.c, g.d]])))
    return out


def _per_factor(group: SchottkyGroup, cap) -> list:
    if np.ndim(cap) == 0:
        return [int(cap)] * group.n_factors
    if len(cap) != group.n_factors:
        raise ValueError("one power cap per factor")
    return [int(c) for c in cap]


def _require_base_i(group: SchottkyGroup):
    o = group.o
    if abs(o.x) > 0 or abs(o.y - 1.0) > 0:
        raise ValueError("exact counting assumes the base point i")


def orbit_count_exact(group: SchottkyGroup, R: float, C: float, max_power: int | None = None,
                      node_budget: int = 2_000_000) -> int:
    """Number of gamma with d(o, gamma o) <= R, by pruned depth-first search.

    Letter powers are enumerated per factor until the single letter is
    farther than R + C, which no extension can undo.
    """
    _require_base_i(group)
    if R < 0:
        raise ValueError("R must be >= 0")
    bound = math.cosh(R + C)
    target = math.cosh(R)
    letters = []
    for j in range(group.n_factors):
        m = 1
        while True:
            if max_power is not None and m > max_power:
                break
            got = False
            for sgn in (1, -1):
                g = group.letter_map(Letter(j, sgn * m))
                M = np.array([[g.a, g.b], [g.c, g.d]])
                if _cosh_distance(M) <= bound:
                    letters.append((j, M))
                    got = True
            if not got:
                break
            m += 1
    count = 1
    nodes = 0
    stack = [(np.eye(2), -1)]
    while stack:
        M, last = stack.pop()
        for j, L in letters:
            if j == last:
                continue
            P = M @ L
            ch = _cosh_distance(P)
            nodes += 1
            if nodes > node_budget:
                raise NodeBudgetExceeded(count, nodes)
            if ch <= target:
                count += 1
            if ch <= bound:
                stack.append((P, j))
    return count


def orbit_count_box(group: SchottkyGroup, R: float, n_max: int, m_max) -> int:
    """Brute force: every reduced word with at most n_max letters of power at most m_max.

    m_max is one cap or a cap per factor.
    """
    _require_base_i(group)
    target = math.cosh(R)
    mats = _letter_matrices(group, m_max)
    facs = np.array([j for j, _, _ in mats])
    L = np.stack([M for _, _, M in mats])
    count = 1
    cur = L.copy()
    cur_f = facs.copy()
    count += int(np.sum(0.5 * np.sum(cur * cur, axis=(1, 2)) <= target))
    for _ in range(n_max - 1):
        # all admissible extensions by one letter, vectorized
        ok = cur_f[:, None] != facs[None, :]
        ii, jj = np.nonzero(ok)
        nxt = np.einsum("nij,njk->nik", cur[ii], L[jj])
        with np.errstate(over="ignore", invalid="ignore"):
            count += int(np.sum(0.5 * np.sum(nxt * nxt, axis=(1, 2)) <= target))
        cur, cur_f = nxt, facs[jj]
        if cur.shape[0] > 30_000_000:
            raise MemoryError("brute-force box too large")
    return count


def geodesic_count_exact(group: SchottkyGroup, R: float, n_max: int, m_max) -> int:
    """Primitive cyclic words of 2..n_max letters (up to rotation, oriented) with translation length <= R."""
    caps = _per_factor(group, m_max)
    letters = [(j, s * m) for j in range(group.n_factors) for m in range(1, caps[j] + 1) for s in (1, -1)]
    count = 0

    def rec(word):
        nonlocal count
        n = len(word)
        if n >= 2 and word[-1][0] != word[0][0] and _is_canonical(word):
            g = group.word_map([Letter(*a) for a in word])
            if abs(g.trace()) > 2.0 and translation_length(g) <= R:
                count += 1
        if n == n_max:
            return
        for a in letters:
            if a[0] != word[-1][0]:
                rec(word + (a,))

    for a in letters:
        rec((a,))
    return count


def _is_canonical(word: tuple) -> bool:
    """Lexicographically smallest rotation and primitive."""
    n = len(word)
    for r in range(1, n):
        rot = word[r:] + word[:r]
        if rot < word:
            return False
        if rot == word:
            return False
    return True


# -- additive mode on a grid ----------------------------------------------------

@dataclass
class Grid:
    step: float
    n: int

    @property
    def centers(self) -> np.ndarray:
        return self.step * np.arange(self.n)

    @property
    def edges(self) -> np.ndarray:
        return self.step * (np.arange(self.n + 1) - 0.5)

    @classmethod
    def up_to(cls, R_max: float, step: float) -> "Grid":
        return cls(step, int(math.floor(R_max / step + 0.5)) + 1)


def tilted_letter_measures(spectra: Sequence, delta: float, grid: Grid, exact_tilt: bool = True) -> list:
    """Per-factor letter measures on the grid.

    With ``exact_tilt`` each letter carries e^{-delta l} at its true length l,
    so total masses (and criticality at delta) are exact and only positions
    are rounded. Otherwise letters carry e^{-delta c} at the bin centre c,
    which makes restored counts exact integers for the rounded lengths.
    """
    if exact_tilt:
        return [np.asarray(s.tilted_bins(grid.edges, delta), float) for s in spectra]
    tilt = np.exp(-delta * grid.centers)
    return [np.asarray(s.bin_counts(grid.edges), float) * tilt for s in spectra]


def _fft_size(n: int) -> int:
    return 1 << int(math.ceil(math.log2(2 * n)))


class _Conv:
    """Truncated linear convolution against fixed kernels."""

    def __init__(self, kernels: list, n: int):
        self.n = n
        self.N = _fft_size(n)
        self.K = [np.fft.rfft(k, self.N) for k in kernels]

    def apply(self, j: int, v: np.ndarray) -> np.ndarray:
        return np.fft.irfft(self.K[j] * np.fft.rfft(v, self.N), self.N)[: self.n]


def renewal_measure(a: list, max_iter: int = 100_000) -> np.ndarray:
    """Tilted measure of all nonempty reduced words: W_j = a_j + a_j * sum_{i != j} W_i."""
    n = a[0].size
    conv = _Conv(a, n)
    # each convolution moves mass up by at least the first occupied bin, so the iteration is finite
    k0 = min(int(np.argmax(x > 0)) if np.any(x > 0) else n for x in a)
    if k0 >= 1:
        max_iter = min(max_iter, n // k0 + 2)
    W = [x.copy() for x in a]
    for _ in range(max_iter):
        S = sum(W)
        new = [a[j] + np.maximum(conv.apply(j, S - W[j]), 0.0) for j in range(len(a))]
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(new, W))
        W = new
        if diff <= 1e-15 * max(float(np.max(np.abs(x))) for x in W):
            break
    return sum(W)


@dataclass
class CountingRun:
    model: str
    R: np.ndarray
    counts: np.ndarray
    ratio: np.ndarray | None = None
    predicted: float | None = None
    meta: dict = field(default_factory=dict)


def orbit_counts_additive(spectra: Sequence, delta: float, R_max: float, step: float = 1e-3) -> CountingRun:
    """N(R) on the bin grid for the additive model (identity included)."""
    grid = Grid.up_to(R_max, step)
    a = tilted_letter_measures(spectra, delta, grid)
    W = renewal_measure(a)
    # restore counts bin by bin; cumulative sums in log scale stay finite for moderate R
    c = grid.centers
    cum = np.cumsum(W * np.exp(delta * c))
    return CountingRun("additive", c, 1.0 + cum, meta={"step": step, "delta": delta})


def orbit_growth_ratio(run: CountingRun, beta: float, delta: float, L=None) -> np.ndarray:
    """N(R) R^(1-beta) L(R) e^(-delta R)."""
    R = run.R
    Lv = np.ones_like(R) if L is None else np.asarray(L(np.maximum(R, 2.0)), float)
    with np.errstate(divide="ignore"):
        return run.counts * R ** (1.0 - beta) * Lv * np.exp(-delta * R)


def orbit_growth_prediction(beta: float, delta: float, E: float, h_star: float) -> float:
    return math.sin(beta * math.pi) / math.pi * h_star / (delta * E)


def window_cv(values: np.ndarray) -> float:
    return float(np.std(values) / np.mean(values))


# -- level sums ---------------------------------------------------------------

def level_measures(spectra: Sequence, delta: float, grid: Grid, k_max: int) -> list:
    """Tilted measures V_k of words with exactly k letters, k = 1..k_max (summed over last factor)."""
    a = tilted_letter_measures(spectra, delta, grid)
    conv = _Conv(a, grid.n)
    V = [x.copy() for x in a]
    out = [sum(V)]
    for _ in range(k_max - 1):
        S = sum(V)
        V = [np.maximum(conv.apply(j, S - V[j]), 0.0) for j in range(len(a))]
        out.append(sum(V))
    return out


@dataclass(frozen=True)
class TestFunction:
    """Compactly supported test function on [center - half, center + half]."""

    kind: str = "bump"
    half: float = 1.0
    center: float = 0.0
    height: float = 1.0

    def __post_init__(self):
        if self.kind not in ("indicator", "bump"):
            raise ValueError("kind must be 'indicator' or 'bump'")
        if not self.half > 0:
            raise ValueError("support must have positive width")

    def __call__(self, x):
        y = (np.asarray(x, float) - self.center) / self.half
        inside = np.abs(y) <= 1.0
        if self.kind == "indicator":
            return np.where(inside, self.height, 0.0)
        return np.where(inside, self.height * 0.5 * (1.0 + np.cos(math.pi * y)), 0.0)

    def mass(self) -> float:
        return float(np.real(self.fourier(0.0)))

    def fourier(self, t):
        """u-hat(t) = integral of u(x) e^{-itx} dx."""
        t = np.asarray(t, float)
        a = self.half
        ph = np.exp(-1j * t * self.center)
        if self.kind == "indicator":
            core = 2.0 * a * np.sinc(t * a / math.pi)
        else:
            # raised cosine: a (sin ta / ta) pi^2 / (pi^2 - (ta)^2)
            ta = t * a
            with np.errstate(divide="ignore", invalid="ignore"):
                core = a * np.sinc(ta / math.pi) * math.pi**2 / (math.pi**2 - ta**2)
            near = np.abs(np.abs(ta) - math.pi) < 1e-8
            core = np.where(near, a / 2.0, core)
        return self.height * core * ph


def W_k_profile(Vk: np.ndarray, grid: Grid, R, u: TestFunction, delta: float) -> np.ndarray:
    """W_k(R, u) = sum over k-letter words of e^{-delta d} u(d - R), from the tilted level measure."""
    R = np.atleast_1d(np.asarray(R, float))
    c = grid.centers
    out = np.empty_like(R)
    for i, r in enumerate(R):
        lo = np.searchsorted(c, r + u.center - u.half, side="left")
        hi = np.searchsorted(c, r + u.center + u.half, side="right")
        out[i] = float(np.sum(Vk[lo:hi] * u(c[lo:hi] - r)))
    return out


@dataclass
class LocalLimitReport:
    mean_error: float
    per_k: dict
    e_gamma: float


def local_limit_error(levels: list, grid: Grid, ks: Sequence[int], a_k, E: float, beta: float,
                      C0: float, u: TestFunction, delta: float, n_R: int = 41) -> LocalLimitReport:
    """Mean over k of the sup-normalized error of a_k e W_k(R,u) against C0 Psi(R/(e a_k)) u-hat(0).

    e = E^(1/beta) converts the eigenvalue amplitude into the stable scale.
    """
    e = E ** (1.0 / beta)
    params = StableParams(beta)
    per_k = {}
    for k in ks:
        ak = float(a_k(k))
        R = np.linspace(0.0, 3.0 * ak, n_R)
        W = W_k_profile(levels[k - 1], grid, R, u, delta)
        pred = C0 * density(params, R / (e * ak)) * u.mass()
        lhs = ak * e * W
        per_k[k] = float(np.mean(np.abs(lhs - pred)) / np.max(np.abs(pred)))
    return LocalLimitReport(float(np.mean(list(per_k.values()))), per_k, e)


def level_bound_constant(levels: list, grid: Grid, ks: Sequence[int], a_k, beta: float, L,
                         u: TestFunction, delta: float) -> float:
    """Smallest C with W_k(R,u) <= C k L(R)/R^(1+beta) |u|_inf on R in [a_k, R_max]."""
    worst = 0.0
    sup_u = u.height
    for k in ks:
        ak = float(a_k(k))
        R = np.linspace(ak, grid.centers[-1] - u.half - u.center, 60)
        R = R[R > ak]
        if R.size == 0:
            continue
        W = W_k_profile(levels[k - 1], grid, R, u, delta)
        Lv = np.ones_like(R) if L is None else np.asarray(L(R), float)
        worst = max(worst, float(np.max(W * R ** (1.0 + beta) / (k * Lv * sup_u))))
    return worst


# -- closed geodesics, additive mode ---------------------------------------------

def _mobius(n: int) -> int:
    res, m, p = 1, n, 2
    while p * p <= m:
        if m % p == 0:
            m //= p
            if m % p == 0:
                return 0
            res = -res
        p += 1
    if m > 1:
        res = -res
    return res


def periodic_measures(spectra: Sequence, delta: float, grid: Grid, n_max: int) -> list:
    """Tilted measures P_n of cyclically admissible n-letter sequences with a marked start."""
    a = tilted_letter_measures(spectra, delta, grid)
    p = len(a)
    conv = _Conv(a, grid.n)
    out = []
    # V[s][j]: words starting with factor s and ending with factor j
    V = [[a[j].copy() if j == s else np.zeros(grid.n) for j in range(p)] for s in range(p)]
    for n in range(1, n_max + 1):
        if n >= 2:
            out.append(sum(V[s][j] for s in range(p) for j in range(p) if j != s))
        else:
            out.append(np.zeros(grid.n))
        if n == n_max:
            break
        new = []
        for s in range(p):
            tot = sum(V[s])
            new.append([np.maximum(conv.apply(j, tot - V[s][j]), 0.0) for j in range(p)])
        V = new
    return out


def geodesic_counts_additive(spectra: Sequence, delta: float, R_max: float, step: float = 1e-3,
                             n_max: int | None = None) -> CountingRun:
    """Primitive closed geodesics of symbolic length >= 2 (oriented, up to rotation), additive mode."""
    grid = Grid.up_to(R_max, step)
    if n_max is None:
        lmin = min(float(np.min(s.lengths(np.array([1])))) for s in spectra)
        n_max = int(R_max / lmin) + 1
    P = periodic_measures(spectra, delta, grid, n_max)
    c = grid.centers
    untilt = np.exp(delta * c)
    cum = [np.cumsum(Pn * untilt) for Pn in P]  # marked periodic words of length n with l <= R

    counts = np.zeros(grid.n)
    for n in range(2, n_max + 1):
        for d in range(1, n + 1):
            if n % d:
                continue
            mu = _mobius(d)
            if mu == 0:
                continue
            m = n // d
            if m < 2:
                continue
            # d-th powers of primitive m-words: length scales by d; keep bins with centre <= R/d
            idx = np.minimum(np.floor(c / d / step + 1e-9).astype(int), grid.n - 1)
            counts += mu * cum[m - 1][idx] / n
    return CountingRun("additive", c, counts, meta={"n_max": n_max, "step": step})


def geodesic_lower_ratio(run: CountingRun, beta: float, delta: float) -> np.ndarray:
    R = run.R
    return delta * R / (beta * np.exp(delta * R)) * run.counts


def roblin_ratio(run: CountingRun, delta: float) -> np.ndarray:
    R = run.R
    return delta * R * np.exp(-delta * R) * run.counts


# -- mixing ----------------------------------------------------------------------

def _mixing_nodes(R_max: float, t_max: float, t_split: float | None = None):
    """Gauss-Legendre nodes on [0, t_max]: geometric panels near the |t|^-beta singularity,
    then uniform panels short enough to resolve e^{-itR} for R <= R_max."""
    from .stablelaw import gauss_legendre

    if t_split is None:
        t_split = min(1.0, 1.0 / max(R_max, 1.0))
    geo = np.geomspace(1e-12, t_split, 40)
    width = min(0.25, math.pi / (2.0 * max(R_max, 1.0)))
    n_uni = int(math.ceil((t_max - t_split) / width))
    edges = np.concatenate([[0.0], geo, np.linspace(t_split, t_max, n_uni + 1)[1:]])
    xg, wg = gauss_legendre(8)
    a_, b_ = edges[:-1], edges[1:]
    ts = (0.5 * (a_ + b_)[:, None] + 0.5 * (b_ - a_)[:, None] * xg).ravel()
    ws = (0.5 * (b_ - a_)[:, None] * wg).ravel()
    return ts, ws


def resolvent_pairing(family, delta: float, ts: np.ndarray, phi=None, psi=None) -> np.ndarray:
    """G-hat(t) = sigma(psi (I - A(delta+it))^{-1} (h phi)) with sigma, h taken at delta."""
    from .transfer import eigendata

    base = eigendata(family.matrix(delta))
    h, s = np.real(base.h), np.real(base.sigma)
    n = h.size
    phi = np.ones(n) if phi is None else np.asarray(phi, float)
    psi = np.ones(n) if psi is None else np.asarray(psi, float)
    z = delta + 1j * ts
    if family.lumped:
        m = np.stack([np.asarray(sp.transform(z), complex) for sp in family.model.spectra], axis=1)
        off = np.ones((n, n)) - np.eye(n)
        A = off[None, :, :] * m[:, None, :]
    else:
        A = np.stack([family.matrix(zz).A for zz in z])
    rhs = np.broadcast_to((h * phi).astype(complex), (ts.size, n))[..., None]
    x = np.linalg.solve(np.eye(n)[None] - A, rhs)[..., 0]
    return x @ (s * psi)


def mixing_correlation(family, delta: float, R, u: TestFunction, v: TestFunction,
                       t_max: float = 40.0, phi=None, psi=None) -> np.ndarray:
    """M(R) summed over all k >= 0, through the Fourier form.

    With G the sigma-weighted measure of tilted word lengths, M(R) is the
    integral of c(l - R) dG(l) where c(y) = int u(s) v(s + y) ds. In
    frequency, M(R) = (1/pi) Re int_0^inf conj(u-hat) v-hat e^{-itR} conj(G-hat) dt,
    and G-hat = sigma (I - A(delta+it))^{-1} h sums the powers of the operator.
    """
    R = np.atleast_1d(np.asarray(R, float))
    ts, ws = _mixing_nodes(float(np.max(np.abs(R))), t_max)
    G = resolvent_pairing(family, delta, ts, phi, psi)
    ch = np.conj(u.fourier(ts)) * v.fourier(ts)
    core = ws * ch * np.conj(G)
    return np.array([float(np.real(np.sum(core * np.exp(-1j * ts * r)))) / math.pi for r in R])


def mixing_prediction(beta: float, E: float, u: TestFunction, v: TestFunction, R, L=None):
    """sin(beta pi)/(pi E) m(u) m(v) / (R^(1-beta) L(R))."""
    R = np.asarray(R, float)
    Lv = 1.0 if L is None else np.asarray(L(R), float)
    return math.sin(beta * math.pi) / (math.pi * E) * u.mass() * v.mass() / (R ** (1.0 - beta) * Lv)


def mixing_time_domain(spectra: Sequence, delta: float, sigma: np.ndarray, h: np.ndarray, R,
                       u: TestFunction, v: TestFunction, step: float = 1e-2) -> np.ndarray:
    """Same M(R) from the binned renewal measure of the lumped additive model.

    G = sum_k sum_{j', j} sigma_j' (A^k)_{j' j} h_j as a measure on lengths,
    including the k = 0 atom at 0.
    """
    R = np.atleast_1d(np.asarray(R, float))
    reach = float(np.max(R)) + 2.0 * (u.half + v.half + abs(u.center) + abs(v.center)) + 1.0
    grid = Grid.up_to(reach, step)
    a = tilted_letter_measures(spectra, delta, grid)
    p = len(a)
    conv = _Conv(a, grid.n)
    # V[j] = sum_j' sigma_j' (paths from j' ending in factor j), then G = sum_j V_j h_j
    V = [sum(sigma[jp] for jp in range(p) if jp != j) * a[j] for j in range(p)]
    G = sum(V[j] * h[j] for j in range(p))
    for _ in range(100_000):
        S = sum(V)
        V = [np.maximum(conv.apply(j, S - V[j]), 0.0) for j in range(p)]
        add = sum(V[j] * h[j] for j in range(p))
        G = G + add
        if float(np.max(add)) <= 1e-16 * float(np.max(G)):
            break
    G[0] += float(sigma @ h)
    c = grid.centers
    out = np.empty_like(R)
    # c(y) = int u(s) v(s + y) ds by quadrature
    s_nodes = np.linspace(u.center - u.half, u.center + u.half, 801)
    uw = u(s_nodes) * (s_nodes[1] - s_nodes[0])
    for i, r in enumerate(R):
        y = c - r
        near = np.abs(y + u.center - v.center) <= u.half + v.half
        yy = y[near]
        cv = (v(s_nodes[None, :] + yy[:, None]) * uw[None, :]).sum(axis=1)
        out[i] = float(np.sum(G[near] * cv))
    return out
