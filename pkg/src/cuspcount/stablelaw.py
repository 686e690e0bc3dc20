"""Fully asymmetric stable laws of index beta in (0, 1).

The characteristic function is

    g(t) = exp(-Gamma(1-beta) exp(i sign(t) beta pi / 2) |t|^beta) = E[exp(-i t X)],

so the density is recovered with the kernel exp(+i t x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as Gamma
from scipy.special import gammaln


@dataclass(frozen=True)
class StableParams:
    beta: float
    scale: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0,1), got {self.beta}")
        if not self.scale > 0.0:
            raise ValueError("scale must be positive")

    @property
    def E(self) -> float:
        return self.scale**self.beta

    @classmethod
    def from_E(cls, beta: float, E: float) -> "StableParams":
        return cls(beta, E ** (1.0 / beta))


def charfn(params: StableParams, t):
    b = params.beta
    t = np.asarray(t, dtype=float) * params.scale
    c = Gamma(1.0 - b)
    ph = np.exp(1j * np.sign(t) * b * math.pi / 2.0)
    return np.exp(-c * ph * np.abs(t) ** b)


def modulus_bound(params: StableParams, t):
    b = params.beta
    t = np.asarray(t, dtype=float) * params.scale
    return np.exp(-(1.0 - b) * Gamma(1.0 - b) * np.abs(t) ** b)


def truncation_point(beta: float, eps: float = 1e-12) -> float:
    """Frequency beyond which |g| < eps."""
    a = math.cos(beta * math.pi / 2.0) * Gamma(1.0 - beta)
    return (math.log(1.0 / eps) / a) ** (1.0 / beta)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def _panels(beta: float, x_max: float, refine: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on [0, T] for the inversion integral."""
    T = truncation_point(beta)
    # geometric panels resolve the |t|^beta cusp at the origin
    edges = [0.0] + list(np.geomspace(1e-9, 1.0, 28 * refine))
    # then panels short enough for both the kernel and the phase of g
    t = 1.0
    while t < T:
        phase_rate = Gamma(1.0 - beta) * beta * t ** (beta - 1.0)
        step = min(1.0, 3.0 / (x_max + phase_rate)) / refine
        t = min(T, t + step)
        edges.append(t)
    edges = np.asarray(edges)
    xg, wg = gauss_legendre(12)
    a, b = edges[:-1], edges[1:]
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _density_standard(beta: float, x: np.ndarray, refine: int = 1) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xm = float(np.max(np.abs(x))) if x.size else 0.0
    t, w = _panels(beta, xm, refine)
    g = charfn(StableParams(beta), t)
    out = np.empty_like(x)
    # chunk to bound memory
    chunk = max(1, int(4e6 // max(t.size, 1)))
    for s in range(0, x.size, chunk):
        xs = x[s:s + chunk]
        kern = np.exp(1j * np.outer(xs, t))
        out[s:s + chunk] = (kern * g[None, :]).real @ w / math.pi
    return out


def density(params: StableParams, x, refine: int = 1):
    """Density by truncated real-axis Fourier inversion."""
    x = np.asarray(x, dtype=float)
    xs = x / params.scale
    return _density_standard(params.beta, xs.ravel(), refine).reshape(x.shape) / params.scale


def levy_density(x, c: float = math.sqrt(math.pi)):
    """Closed-form one-sided stable density of index 1/2 with Laplace transform exp(-c sqrt(s))."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = c * xp**-1.5 * np.exp(-c * c / (4.0 * xp)) / (2.0 * math.sqrt(math.pi))
    return out


def levy_scale_from_laplace(beta: float = 0.5) -> float:
    """Match E[exp(-sX)] = exp(-Gamma(1-beta) s^beta) against exp(-c sqrt(s))."""
    if beta != 0.5:
        raise ValueError("closed form exists only for beta = 1/2")
    return float(Gamma(0.5))


def _tail_series(beta: float, Z: float, power: float, terms: int = 80) -> float:
    """Integral over [Z, inf) of z^power Psi(z) from the convergent large-z series.

    Psi(z) = (1/pi) sum_k (-1)^(k+1) Gamma(k beta + 1)/k! c^k sin(k pi beta) z^(-1-k beta).
    """
    c = Gamma(1.0 - beta)
    total = 0.0
    for k in range(1, terms + 1):
        e = power - 1.0 - k * beta
        if e >= -1.0:
            raise ValueError("tail integral diverges")
        lg = gammaln(k * beta + 1.0) - gammaln(k + 1.0) + k * math.log(c)
        coef = (-1) ** (k + 1) * math.exp(lg) * math.sin(k * math.pi * beta) / math.pi
        total += coef * Z ** (e + 1.0) / (-(e + 1.0))
    return total


def _body_integral(beta: float, power: float, Z: float, n_nodes: int, refine: int) -> float:
    """Integral over (0, Z] of z^power Psi(z), with z = Z w^m to tame the origin."""
    m = 3.0 / (1.0 + power) if power > -1.0 else 3.0
    xg, wg = gauss_legendre(n_nodes)
    w = 0.5 * (xg + 1.0)
    ww = 0.5 * wg
    z = Z * w**m
    jac = Z * m * w ** (m - 1.0)
    psi = _density_standard(beta, z, refine)
    return float(np.sum(ww * jac * z**power * psi))


@dataclass
class IntegralResult:
    value: float
    change_on_refine: float


def weighted_integral(params: StableParams, Z: float = 3.0, n_nodes: int = 48) -> IntegralResult:
    """Integral of z^-beta Psi(z) over (0, inf) for the unit-scale law."""
    b = params.beta
    first = _body_integral(b, -b, Z, n_nodes, 1) + _tail_series(b, Z, -b)
    second = _body_integral(b, -b, Z, 2 * n_nodes, 2) + _tail_series(b, Z, -b)
    return IntegralResult(second, abs(second - first))


def total_mass(params: StableParams, Z: float = 3.0, n_nodes: int = 48) -> float:
    b = params.beta
    return _body_integral(b, 0.0, Z, n_nodes, 1) + _tail_series(b, Z, 0.0)


def weighted_integral_exact(beta: float) -> float:
    return math.sin(beta * math.pi) / (beta * math.pi)


def stability_check(beta: float = 0.5, x_max: float = 8.0, h: float = 2e-3) -> float:
    """Sup gap between Psi*Psi and the rescaled density 2^(-1/beta) Psi(x 2^(-1/beta)).

    The convolution is brute force on a uniform grid.
    """
    n = int(round(x_max / h))
    x = h * np.arange(n + 1)
    psi = np.zeros_like(x)
    psi[1:] = _density_standard(beta, x[1:])
    # psi vanishes to all orders at 0, so the plain Riemann sum is spectrally accurate
    conv = np.convolve(psi, psi)[: n + 1] * h
    s = 2.0 ** (1.0 / beta)
    ref = _density_standard(beta, x[1:] / s) / s
    return float(np.max(np.abs(conv[1:] - ref)))
