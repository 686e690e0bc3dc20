"""Hyperbolic plane geometry in the upper half-plane model.

Boundary points are plain floats. ``math.inf`` is the tagged point at
infinity and every routine branches on it explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

INF = math.inf

BoundaryPoint = float
Point = Union["PlanePoint", complex]


@dataclass(frozen=True)
class PlanePoint:
    x: float
    y: float

    def __post_init__(self):
        if not self.y > 0.0:
            raise ValueError(f"plane point needs y > 0, got {self.y}")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex) -> "PlanePoint":
        return cls(z.real, z.imag)


BASE_POINT = PlanePoint(0.0, 1.0)


def _as_complex(p: Point) -> complex:
    if isinstance(p, PlanePoint):
        return p.z
    z = complex(p)
    if not z.imag > 0.0:
        raise ValueError(f"interior point needs positive imaginary part, got {z}")
    return z


def is_infinite(x: BoundaryPoint) -> bool:
    return math.isinf(x)


@dataclass(frozen=True)
class MoebiusMap:
    """Element of PSL(2,R) stored as a unit-determinant matrix."""

    a: float
    b: float
    c: float
    d: float

    @classmethod
    def normalized(cls, a: float, b: float, c: float, d: float) -> "MoebiusMap":
        det = a * d - b * c
        if det <= 0.0:
            raise ValueError(f"determinant must be positive, got {det}")
        r = math.sqrt(det)
        return cls(a / r, b / r, c / r, d / r)

    @classmethod
    def identity(cls) -> "MoebiusMap":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def translation(cls, shift: float) -> "MoebiusMap":
        return cls(1.0, shift, 0.0, 1.0)

    @classmethod
    def dilation(cls, k: float) -> "MoebiusMap":
        r = math.sqrt(k)
        return cls(r, 0.0, 0.0, 1.0 / r)

    @classmethod
    def hyperbolic(cls, repeller: float, attractor: float, multiplier: float) -> "MoebiusMap":
        """Hyperbolic map with finite fixed points, pushing toward ``attractor``."""
        if repeller == attractor:
            raise ValueError("fixed points must differ")
        # conj maps 0 -> repeller and inf -> attractor
        if attractor > repeller:
            conj = cls.normalized(attractor, repeller, 1.0, 1.0)
        else:
            conj = cls.normalized(-attractor, repeller, -1.0, 1.0)
        return conj @ cls.dilation(multiplier) @ conj.inverse()

    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def trace(self) -> float:
        return self.a + self.d

    def inverse(self) -> "MoebiusMap":
        return MoebiusMap(self.d, -self.b, -self.c, self.a)

    def __matmul__(self, other: "MoebiusMap") -> "MoebiusMap":
        return MoebiusMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def power(self, m: int) -> "MoebiusMap":
        base = self if m >= 0 else self.inverse()
        out = MoebiusMap.identity()
        k = abs(m)
        while k:
            if k & 1:
                out = out @ base
            base = base @ base
            k >>= 1
        return out

    def apply(self, p: Point) -> complex:
        z = _as_complex(p)
        # explicit imaginary part avoids cancellation for deep orbit points
        den = self.c * z + self.d
        n2 = den.real * den.real + den.imag * den.imag
        num = (self.a * z + self.b) * den.conjugate()
        return complex(num.real / n2, z.imag / n2)

    def apply_boundary(self, x: BoundaryPoint) -> BoundaryPoint:
        if is_infinite(x):
            return INF if self.c == 0.0 else self.a / self.c
        den = self.c * x + self.d
        if den == 0.0:
            return INF
        return (self.a * x + self.b) / den

    def same_element(self, other: "MoebiusMap", tol: float = 1e-12) -> bool:
        """Equality in PSL(2,R), i.e. up to overall sign."""
        u = (self.a, self.b, self.c, self.d)
        v = (other.a, other.b, other.c, other.d)
        return all(abs(p - q) <= tol for p, q in zip(u, v)) or all(
            abs(p + q) <= tol for p, q in zip(u, v)
        )


def hyp_distance(p: Point, q: Point) -> float:
    zp, zq = _as_complex(p), _as_complex(q)
    num = (zp.real - zq.real) ** 2 + (zp.imag - zq.imag) ** 2
    # arccosh(1+u) = log1p(u + sqrt(u(u+2))) keeps precision near zero
    u = num / (2.0 * zp.imag * zq.imag)
    return math.log1p(u + math.sqrt(u * (u + 2.0)))


def _horo_height(xi: BoundaryPoint, z: complex) -> float:
    """Log of the horospherical height of z seen from xi."""
    if is_infinite(xi):
        return math.log(z.imag)
    dx = z.real - xi
    return math.log(z.imag) - math.log(dx * dx + z.imag * z.imag)


def busemann(xi: BoundaryPoint, p: Point, q: Point) -> float:
    """Busemann cocycle: limit of d(p,z) - d(z,q) as z tends to xi."""
    return _horo_height(xi, _as_complex(q)) - _horo_height(xi, _as_complex(p))


def geodesic_point(x: BoundaryPoint, y: BoundaryPoint) -> complex:
    """Some interior point on the geodesic joining two boundary points."""
    if x == y:
        raise ValueError("geodesic endpoints coincide: infinite Gromov product")
    if is_infinite(x):
        return complex(y, 1.0)
    if is_infinite(y):
        return complex(x, 1.0)
    return complex(0.5 * (x + y), 0.5 * abs(y - x))


def gromov_product(o: Point, x: BoundaryPoint, y: BoundaryPoint, z: complex | None = None) -> float:
    """Gromov product of two boundary points seen from o."""
    if z is None:
        z = geodesic_point(x, y)
    return 0.5 * (busemann(x, o, z) + busemann(y, o, z))


def visual_distance(o: Point, x: BoundaryPoint, y: BoundaryPoint, a: float = 1.0) -> float:
    if x == y:
        return 0.0
    return math.exp(-a * gromov_product(o, x, y))


def conformal_derivative(g: MoebiusMap, x: BoundaryPoint, a: float = 1.0, o: Point = BASE_POINT) -> float:
    """Derivative of g at x for the visual metric seen from o."""
    if a <= 0.0:
        raise ValueError("a must be positive")
    return math.exp(-a * busemann(x, g.inverse().apply(o), o))


def translation_length(g: MoebiusMap) -> float:
    tr = abs(g.trace())
    if tr <= 2.0:
        raise ValueError(f"not hyperbolic: |trace| = {tr}")
    return 2.0 * math.acosh(tr / 2.0)
