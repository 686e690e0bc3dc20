"""Slowly and regularly varying functions.

A slowly varying function is a closed descriptor rather than an arbitrary
callable, so Karamata integrals and Potter scans can use closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline

KINDS = ("constant", "logpow", "invlog2", "tabulated")


@dataclass(frozen=True)
class SlowlyVarying:
    """L(x) from one of four families.

    constant   c
    logpow     (ln x)^gamma
    invlog2    (ln x)^-2
    tabulated  positive samples, interpolated in log-log coordinates
    """

    kind: str = "constant"
    c: float = 1.0
    gamma: float = 1.0
    table_x: tuple = ()
    table_y: tuple = ()
    asymptotic_class: str = ""
    _spline: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown slowly varying kind {self.kind!r}")
        if self.kind == "constant" and not self.c > 0:
            raise ValueError("constant L must be positive")
        if self.kind == "tabulated":
            xs = np.asarray(self.table_x, dtype=float)
            ys = np.asarray(self.table_y, dtype=float)
            if xs.size < 4 or xs.size != ys.size:
                raise ValueError("tabulated L needs at least 4 matching samples")
            if np.any(np.diff(xs) <= 0) or np.any(ys <= 0):
                raise ValueError("tabulated L needs increasing x and positive values")
            if not self.asymptotic_class:
                raise ValueError("tabulated L requires an asymptotic class")
            object.__setattr__(self, "_spline", CubicSpline(np.log(xs), np.log(ys)))

    # constructors
    @classmethod
    def one(cls) -> "SlowlyVarying":
        return cls("constant", c=1.0)

    @classmethod
    def log_power(cls, gamma: float) -> "SlowlyVarying":
        return cls("logpow", gamma=gamma)

    @classmethod
    def inverse_log_squared(cls) -> "SlowlyVarying":
        return cls("invlog2")

    @classmethod
    def tabulated(cls, xs, ys, asymptotic_class: str) -> "SlowlyVarying":
        return cls("tabulated", table_x=tuple(map(float, xs)), table_y=tuple(map(float, ys)),
                   asymptotic_class=asymptotic_class)

    @property
    def analytic(self) -> bool:
        """True when the descriptor extends holomorphically off the real axis."""
        return self.kind != "tabulated"

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant({self.c:g})"
        if self.kind == "logpow":
            return f"logpow({self.gamma:g})"
        if self.kind == "invlog2":
            return "invlog2"
        return f"tabulated[{self.asymptotic_class}]"

    def __call__(self, x):
        """Evaluate L. Accepts real or complex arrays for analytic kinds."""
        if self.kind == "constant":
            return self.c * np.ones_like(x) if isinstance(x, np.ndarray) else self.c
        if self.kind == "logpow":
            return np.log(x) ** self.gamma
        if self.kind == "invlog2":
            return np.log(x) ** -2.0
        return np.exp(self._spline(np.log(x)))

    def dlog(self, x):
        """Logarithmic derivative L'(x)/L(x)."""
        if self.kind == "constant":
            return 0.0 * x
        if self.kind == "logpow":
            return self.gamma / (x * np.log(x))
        if self.kind == "invlog2":
            return -2.0 / (x * np.log(x))
        return self._spline(np.log(x), 1) / x

    def d2log(self, x):
        """Second derivative of log L."""
        if self.kind == "constant":
            return 0.0 * x
        if self.kind in ("logpow", "invlog2"):
            g = self.gamma if self.kind == "logpow" else -2.0
            lx = np.log(x)
            return -g * (lx + 1.0) / (x * lx) ** 2
        u = np.log(x)
        return (self._spline(u, 2) - self._spline(u, 1)) / x**2


def tilde_L(L: SlowlyVarying, x: float) -> float:
    """Integral of L(y)/y from 1 to x.

    For the inverse-log-squared kind the integral diverges at 1, so the lower
    limit is e instead.
    """
    if x < 1.0:
        raise ValueError("tilde_L needs x >= 1")
    lx = math.log(x)
    if L.kind == "constant":
        return L.c * lx
    if L.kind == "logpow":
        return lx ** (L.gamma + 1.0) / (L.gamma + 1.0)
    if L.kind == "invlog2":
        if x < math.e:
            raise ValueError("tilde_L for invlog2 needs x >= e")
        return 1.0 - 1.0 / lx
    val, _ = integrate.quad(lambda u: float(L(math.exp(u))), 0.0, lx, epsabs=0.0, epsrel=1e-12, limit=400)
    return val


def karamata_sum_ratio(L: SlowlyVarying, beta: float, N: int) -> float:
    """Ratio of sum_{n<=N} L(n)/n^beta to N^(1-beta) L(N)/(1-beta)."""
    if not beta < 1.0:
        raise ValueError("discrete Karamata ratio needs beta < 1")
    n = np.arange(2, N + 1, dtype=float)
    total = float(np.sum(L(n) / n**beta))
    if L.kind in ("constant", "tabulated"):
        total += float(L(np.array([1.0]))[0])
    # L(1) vanishes for logpow; invlog2 is undefined there and skipped
    return total / (N ** (1.0 - beta) * float(L(float(N))) / (1.0 - beta))


def karamata_upper_tail_ratio(L: SlowlyVarying, beta: float, x: float) -> float:
    """Ratio of the integral of L(y)/y^beta over [x, inf) to L(x)/((beta-1)x^(beta-1))."""
    if not beta > 1.0:
        raise ValueError("upper tail Karamata needs beta > 1")
    lx = math.log(x)
    # substitute y = x e^u so the integrand decays like e^{-(beta-1)u}
    f = lambda u: float(L(x * math.exp(u))) * math.exp(-(beta - 1.0) * u)
    # stop before x e^u leaves double range; the dropped piece is below e^{-(beta-1)U}
    U = 700.0 - lx
    if (beta - 1.0) * U < 30.0:
        raise ValueError("beta too close to 1 for the upper tail integral")
    val, _ = integrate.quad(f, 0.0, U, epsabs=0.0, epsrel=1e-12, limit=400)
    return val * (beta - 1.0) / float(L(x))


@dataclass
class PotterReport:
    ok: bool
    T: float | None
    worst_ratio: float
    grid_min: float
    grid_max: float


def potter_check(L: SlowlyVarying, B: float, rho: float, T_max: float,
                 x_min: float = 3.0, n_grid: int = 400) -> PotterReport:
    """Smallest grid point T such that all grid pairs above T obey the Potter bound.

    Failure is reported when only the top of the grid is clean, which is the
    signature of a function whose ratios never settle.
    """
    if not (B > 1.0 and rho > 0.0):
        raise ValueError("potter_check needs B > 1 and rho > 0")
    xs = np.geomspace(x_min, T_max, n_grid)
    lv = np.log(np.asarray(L(xs), dtype=float))
    lx = np.log(xs)
    lhs = lv[:, None] - lv[None, :]
    rhs = math.log(B) + rho * np.abs(lx[:, None] - lx[None, :])
    excess = lhs - rhs
    bad = excess > 0.0
    worst = float(np.max(np.exp(excess)))
    if not bad.any():
        return PotterReport(True, float(xs[0]), worst, float(xs[0]), float(xs[-1]))
    i, j = np.nonzero(bad)
    k = int(np.max(np.minimum(i, j))) + 1
    # the final tenth of the grid is too short to certify anything
    if k >= int(0.9 * n_grid):
        return PotterReport(False, None, worst, float(xs[0]), float(xs[-1]))
    return PotterReport(True, float(xs[k]), worst, float(xs[0]), float(xs[-1]))


@dataclass
class NormalizingSequence:
    """The sequence a_k with a_k^beta = k L(a_k)."""

    beta: float
    L: SlowlyVarying
    _cache: dict = field(default_factory=dict, repr=False)

    def A(self, x: float) -> float:
        return x**self.beta / float(self.L(x))

    def __call__(self, k: float) -> float:
        return solve_a_k(self, k)


def solve_a_k(seq: NormalizingSequence, k: float) -> float:
    """Root of a^beta = k L(a), bracketed in log a."""
    if k < 1:
        raise ValueError("k must be >= 1")
    key = float(k)
    if key in seq._cache:
        return seq._cache[key]
    beta, L = seq.beta, seq.L
    if L.kind == "constant":
        a = (key * L.c) ** (1.0 / beta)
        seq._cache[key] = a
        return a

    def f(u):
        x = math.exp(u)
        return beta * u - math.log(key) - math.log(float(L(x)))

    # A is increasing past the point where beta > x L'/L; start the bracket there
    lo = 1.5
    while f(lo) > 0.0 or beta - math.exp(lo) * float(L.dlog(math.exp(lo))) <= 0.0:
        lo += 0.5
    hi = lo + 1.0
    while f(hi) < 0.0:
        hi *= 2.0
    u = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    a = math.exp(u)
    seq._cache[key] = a
    return a


def fitted_index(seq: NormalizingSequence, k_lo: float = 1e2, k_hi: float = 1e5, n: int = 31) -> float:
    """Log-log slope of a_k against k."""
    ks = np.geomspace(k_lo, k_hi, n)
    a = np.array([solve_a_k(seq, k) for k in ks])
    return float(np.polyfit(np.log(ks), np.log(a), 1)[0])
