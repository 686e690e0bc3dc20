"""Transfer operators on symbolic cylinders.

Functions on the coded limit set are sampled on depth-d cylinders, i.e.
admissible words of d letters. The operator acts by

    (L_z phi)(C') = sum over letters a with i(a) != first factor of C'
                    of w_z(a, x_C') phi(a C'),

so the matrix is stored as A[C', C] with C the image cylinder a C' cut to
depth d. The right eigenvector is the eigenfunction h and the left
eigenvector is the invariant measure sigma.

The alphabet is truncated at power M per factor and sign. Letters beyond M
are merged into one tail pseudo-letter per factor and sign whose weight is
the full tail sum, so no mass is dropped. Its image cylinder uses the power
M+1 as representative.

Cocycle models
  additive   b(a, x) = l(a)
  synthetic  b(a, x) = l(a) - 2 (xi_a | x)_o, xi_a the backward point of a
  exact      b(a, x) = Busemann at x of (a^-1 o, o) in constant curvature
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .geometry import busemann, gromov_product, hyp_distance, translation_length
from .schottky import Letter, SchottkyGroup, cocycle_b

MODELS = ("additive", "synthetic", "exact")


# -- letter spectra --------------------------------------------------------

class HyperbolicSpectrum:
    """Letter lengths l_m = |m| lam + c for m != 0."""

    def __init__(self, lam: float, c: float = 0.0):
        if lam <= 0:
            raise ValueError("translation length must be positive")
        self.lam, self.c = lam, c

    def lengths(self, m) -> np.ndarray:
        return np.abs(np.asarray(m, dtype=float)) * self.lam + self.c

    def transform(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        q = np.exp(-z * self.lam)
        return 2.0 * np.exp(-z * self.c) * q / (1.0 - q)

    def head(self, z, M: int) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return 2.0 * np.sum(np.exp(-np.outer(z, self.lengths(np.arange(1, M + 1)))), axis=1)

    def bin_counts(self, edges: np.ndarray) -> np.ndarray:
        return self.tilted_bins(edges, 0.0)

    def tilted_bins(self, edges: np.ndarray, delta: float) -> np.ndarray:
        m_max = int(math.ceil((edges[-1] - self.c) / self.lam)) + 1
        ls = self.lengths(np.arange(1, max(m_max, 1) + 1))
        return 2.0 * np.histogram(ls, bins=edges, weights=np.exp(-delta * ls))[0]

    def tail_constant(self) -> float:
        return 0.0


class ExplicitSpectrum:
    """Letter lengths from a callable l(m), m >= 1, with a geometric tail model beyond n_exact."""

    def __init__(self, length_fn: Callable[[int], float], n_exact: int = 40):
        self.exact = np.array([length_fn(m) for m in range(1, n_exact + 1)])
        # lengths of hyperbolic powers are asymptotically linear in m
        self.lam = self.exact[-1] - self.exact[-2]
        self.c = self.exact[-1] - n_exact * self.lam

    def lengths(self, m) -> np.ndarray:
        m = np.abs(np.atleast_1d(np.asarray(m, dtype=int)))
        out = m * self.lam + self.c
        inside = m <= self.exact.size
        out = out.astype(float)
        out[inside] = self.exact[m[inside] - 1]
        return out

    def transform(self, z) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        N = self.exact.size
        q = np.exp(-z * self.lam)
        tail = np.exp(-z * ((N + 1) * self.lam + self.c)) / (1.0 - q)
        return 2.0 * (np.sum(np.exp(-np.outer(z, self.exact)), axis=1) + tail)

    def bin_counts(self, edges: np.ndarray) -> np.ndarray:
        return self.tilted_bins(edges, 0.0)

    def tilted_bins(self, edges: np.ndarray, delta: float) -> np.ndarray:
        m_max = max(self.exact.size, int(math.ceil((edges[-1] - self.c) / self.lam)) + 1)
        ls = self.lengths(np.arange(1, m_max + 1))
        return 2.0 * np.histogram(ls, bins=edges, weights=np.exp(-delta * ls))[0]

    def head(self, z, M: int) -> np.ndarray:
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        return 2.0 * np.sum(np.exp(-np.outer(z, self.lengths(np.arange(1, M + 1)))), axis=1)

    def tail_constant(self) -> float:
        return 0.0


@dataclass
class DistanceModel:
    """Letter spectra per factor plus the cocycle model.

    ``spectra[j]`` needs ``transform(z)``, ``head(z, M)`` and ``lengths(m)``.
    ``tail_constants[j]`` is C_j in tail ~ C_j L(T)/T^beta (0 when
    exponentially small).
    """

    kind: str
    spectra: list
    tail_constants: list
    beta: float = 0.5
    description: str = ""

    def __post_init__(self):
        if self.kind not in MODELS:
            raise ValueError(f"unknown model {self.kind!r}")


def geometric_spectra(group: SchottkyGroup, n_exact: int = 40) -> list:
    """Explicit constant-curvature letter distances for hyperbolic factors."""
    out = []
    for j, f in enumerate(group.factors):
        fn = lambda m, j=j: group.letter_distance(Letter(j, m))
        out.append(ExplicitSpectrum(fn, n_exact))
    return out


def tune_hyperbolic_offset(m_parabolic: float, lam: Sequence[float], s: float = 0.5) -> float:
    """Common offset c so that sum_j m_j/(1+m_j) = 1 at s for a parabolic factor plus hyperbolic ones.

    This puts the spectral radius of the lumped operator at exactly 1 at s.
    """
    target = 1.0 - m_parabolic / (1.0 + m_parabolic)
    if target <= 0:
        raise ValueError("parabolic factor alone already exceeds the threshold")

    def f(c):
        tot = 0.0
        for l in lam:
            m = float(HyperbolicSpectrum(l, c).transform(s)[0].real)
            tot += m / (1.0 + m)
        return tot - target

    lo = -0.99 * min(lam)
    if f(lo) < 0:
        raise ValueError("no admissible offset keeps letter lengths positive")
    return optimize.brentq(f, lo, 100.0, xtol=1e-15, rtol=1e-15)


def exotic_model(group: SchottkyGroup, kind: str = "additive", beta: float = 0.5, L=None,
                 offset: float | None = None) -> tuple:
    """Synthetic parabolic letters plus hyperbolic letters l_m = |m| lam_j + c.

    Without ``offset`` the common c is tuned so the lumped operator has
    spectral radius 1 at s = 1/2, i.e. delta = 1/2 in the additive model.
    Returns (model, c).
    """
    from .cuspmetric import SyntheticParabolic

    if group.factors[0].kind != "parabolic" or group.p != 1:
        raise ValueError("exotic model expects exactly one parabolic factor, placed first")
    par = SyntheticParabolic(beta, L)
    lam = [translation_length(group.letter_map(Letter(j, 1))) for j in range(1, group.n_factors)]
    if offset is None:
        offset = tune_hyperbolic_offset(float(par.transform(0.5)[0].real), lam)
    spectra = [par] + [HyperbolicSpectrum(l, offset) for l in lam]
    consts = [2.0 ** beta / beta] + [0.0] * len(lam)
    return DistanceModel(kind, spectra, consts, beta, "exotic synthetic"), offset


# -- cylinders and matrices ------------------------------------------------

@dataclass(frozen=True)
class SymLetter:
    """Alphabet entry: factor, signed power, and whether it stands for the whole tail."""

    factor: int
    power: int
    tail: bool = False

    @property
    def letter(self) -> Letter:
        return Letter(self.factor, self.power)


def sym_alphabet(group: SchottkyGroup, M: int, lumped: bool = False) -> list:
    out = []
    for j in range(group.n_factors):
        if lumped:
            out.append(SymLetter(j, 1, True))
            continue
        for m in range(1, M + 1):
            out += [SymLetter(j, m), SymLetter(j, -m)]
        out += [SymLetter(j, M + 1, True), SymLetter(j, -(M + 1), True)]
    return out


@dataclass
class CylinderBasis:
    depth: int
    M: int
    words: list
    index: dict
    reps: np.ndarray
    lumped: bool

    def __len__(self):
        return len(self.words)


def build_basis(group: SchottkyGroup, depth: int, M: int, lumped: bool = False,
                x0: float | None = None) -> CylinderBasis:
    """Depth-d admissible words over the truncated alphabet, with representatives word . x0."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if M < 1 and not lumped:
        raise ValueError("truncation empty")
    x0 = group.x0 if x0 is None else x0
    alph = sym_alphabet(group, M, lumped)
    words = [(a,) for a in alph]
    for _ in range(depth - 1):
        words = [w + (a,) for w in words for a in alph if a.factor != w[-1].factor]
    index = {w: i for i, w in enumerate(words)}
    reps = np.array([group.apply_word([a.letter for a in w], x0) for w in words])
    return CylinderBasis(depth, M, words, index, reps, lumped)


@dataclass
class TransferMatrix:
    z: complex
    basis: CylinderBasis
    A: np.ndarray
    tail_pattern: list  # (factor, matrix of tail-entry weights without the tail sum)


def _letter_weights(model: DistanceModel, z: complex, M: int) -> dict:
    """e^{-z l(a)} for explicit letters and the full per-sign tail sum for tail letters."""
    out = {}
    for j, spec in enumerate(model.spectra):
        ls = spec.lengths(np.arange(1, M + 1))
        for m in range(1, M + 1):
            w = complex(np.exp(-z * ls[m - 1]))
            out[(j, m)] = out[(j, -m)] = w
        tail = complex(spec.transform(z)[0] - spec.head(z, M)[0]) / 2.0
        out[(j, M + 1)] = out[(j, -(M + 1))] = tail
    return out


def _interior_gromov(o: complex, xi: float, y: complex) -> float:
    """(xi | y)_o for a boundary point xi and an interior point y."""
    return 0.5 * (hyp_distance(o, y) + busemann(xi, o, y))


def _position_shift(group: SchottkyGroup, kind: str, a: SymLetter, x: float | None,
                    y: complex | None) -> float:
    """b(a, .) - l(a) at a boundary point x or, for the extended operator, at an interior point y = g o."""
    if kind == "additive":
        return 0.0
    f = group.factors[a.factor]
    xi = f.backward_point(1 if a.power > 0 else -1)
    if kind == "synthetic":
        g = gromov_product(group.o, xi, x) if y is None else _interior_gromov(group.o, xi, y)
        return -2.0 * g
    # a tail letter takes the correction of its first power M+1; b - d converges in the power
    if y is not None:
        gm = group.letter_map(a.letter)
        b = hyp_distance(gm.inverse().apply(group.o), y) - hyp_distance(group.o, y)
    else:
        b = cocycle_b(group, [a.letter], x)
    return b - group.letter_distance(a.letter)


@dataclass
class _Structure:
    rows: np.ndarray
    cols: np.ndarray
    keys: list
    key_idx: np.ndarray
    shift: np.ndarray
    tail: np.ndarray
    factor: np.ndarray


_STRUCT_CACHE: dict = {}


def _structure(group: SchottkyGroup, kind: str, basis: CylinderBasis) -> _Structure:
    """Sparsity pattern and position shifts; independent of z, so cached per basis."""
    key = (id(group), kind, id(basis))
    if key in _STRUCT_CACHE:
        return _STRUCT_CACHE[key][1]
    alph = sym_alphabet(group, basis.M)
    keys = [(a.factor, a.power) for a in alph]
    rows, cols, kidx, shift, tail, fac = [], [], [], [], [], []
    memo = {}
    for ic, w in enumerate(basis.words):
        x = float(basis.reps[ic])
        for ia, a in enumerate(alph):
            if a.factor == w[0].factor:
                continue
            rows.append(ic)
            cols.append(basis.index[(a,) + w[: basis.depth - 1]])
            kidx.append(ia)
            # the shift only depends on the letter through its factor and sign, except in exact mode
            mk = (a.factor, a.power if kind == "exact" else (1 if a.power > 0 else -1), ic)
            if mk not in memo:
                memo[mk] = _position_shift(group, kind, a, x, None)
            shift.append(memo[mk])
            tail.append(a.tail)
            fac.append(a.factor)
    st = _Structure(np.array(rows), np.array(cols), keys, np.array(kidx), np.array(shift),
                    np.array(tail, bool), np.array(fac))
    # keep the group and basis alive so their ids stay unique
    _STRUCT_CACHE[key] = ((group, basis), st)
    return st


def build_matrix(group: SchottkyGroup, model: DistanceModel, z, M: int = 8, depth: int = 1,
                 basis: CylinderBasis | None = None) -> TransferMatrix:
    """Transfer matrix A[C', C] at complex z on depth-d cylinders."""
    z = complex(z)
    if basis is None:
        basis = build_basis(group, depth, M)
    n = len(basis)
    st = _structure(group, model.kind, basis)
    lw = _letter_weights(model, z, basis.M)
    base = np.array([lw[k] for k in st.keys])[st.key_idx]
    vals = base * np.exp(-z * st.shift)
    A = np.zeros((n, n), dtype=complex)
    np.add.at(A, (st.rows, st.cols), vals)
    tails = []
    for j in range(group.n_factors):
        P = np.zeros((n, n))
        m = st.tail & (st.factor == j)
        np.add.at(P, (st.rows[m], st.cols[m]), 0.5 * np.exp(-z.real * st.shift[m]))
        tails.append(P)
    return TransferMatrix(z, basis, A, tails)


def build_extended_matrix(group: SchottkyGroup, model: DistanceModel, z, M: int, depth: int,
                          x0: float | None = None):
    """Extended operator on words of length 0..depth, the short words being exact points w x0.

    Row 0 is the empty word (the point x0 itself), where the extended cocycle
    reduces to the letter length. Words shorter than ``depth`` use the
    interior point w o in the correction, following d(a^-1 o, g o) - d(o, g o).
    """
    z = complex(z)
    x0 = group.x0 if x0 is None else x0
    full = build_basis(group, depth, M, x0=x0)
    alph = sym_alphabet(group, M)
    words = [()]
    for L in range(1, depth):
        words += [w for w in _words_of_length(alph, L)]
    short_n = len(words)
    words += full.words
    index = {w: i for i, w in enumerate(words)}
    n = len(words)
    A = np.zeros((n, n), dtype=complex)
    lw = _letter_weights(model, z, M)
    for ic, w in enumerate(words):
        if len(w) < depth:
            y = group.orbit_point([a.letter for a in w]) if w else complex(group.o.x, group.o.y) \
                if hasattr(group.o, "x") else complex(group.o)
            x = None
        else:
            y, x = None, float(full.reps[ic - short_n])
        for a in alph:
            if w and a.factor == w[0].factor:
                continue
            k = index[((a,) + w)[:depth]]
            sh = _position_shift(group, model.kind, a, x, y) if w else 0.0
            A[ic, k] += lw[(a.factor, a.power)] * np.exp(-z * sh)
    return A, words


def _words_of_length(alph: list, L: int) -> list:
    words = [(a,) for a in alph]
    for _ in range(L - 1):
        words = [w + (a,) for w in words for a in alph if a.factor != w[-1].factor]
    return words


def lumped_matrix(m: Sequence[complex]) -> np.ndarray:
    """Depth-0 additive operator A[j', j] = m_j (1 - delta_jj')."""
    m = np.asarray(m, dtype=complex)
    p = m.size
    return (np.ones((p, p)) - np.eye(p)) * m[None, :]


# -- spectra ----------------------------------------------------------------

@dataclass
class SpectralData:
    lam: complex
    h: np.ndarray
    sigma: np.ndarray
    gap: float
    residual: float
    left_residual: float
    iterations: int


def _power(A: np.ndarray, v: np.ndarray, tol: float, max_iter: int):
    """Plain power iteration with Rayleigh quotients and phase alignment."""
    v = v / np.linalg.norm(v)
    lam, res = 0.0, math.inf
    for it in range(1, max_iter + 1):
        u = A @ v
        lam = np.vdot(v, u)
        res = np.linalg.norm(u - lam * v)
        nu = np.linalg.norm(u)
        if nu == 0:
            raise ArithmeticError("power iteration collapsed to zero")
        v_new = u / nu
        ph = np.vdot(v, v_new)
        if ph != 0:
            v_new = v_new * (abs(ph) / ph)
        v = v_new
        if res < tol * max(abs(lam), 1e-300):
            return lam, v, it
    raise ArithmeticError(f"power iteration did not converge in {max_iter} iterations (residual {res:.2e})")


def _second_modulus(A: np.ndarray, h: np.ndarray, s: np.ndarray, n_iter: int = 200) -> float:
    """|lambda_2| by iterating a vector with the dominant spectral projection removed."""
    rng = np.random.default_rng(12345)
    w = rng.standard_normal(A.shape[0]) + 0j
    est = 0.0
    for _ in range(n_iter):
        w = w - (s @ w) / (s @ h) * h
        nw = np.linalg.norm(w)
        if nw < 1e-300:
            return 0.0
        w = w / nw
        u = A @ w
        u = u - (s @ u) / (s @ h) * h
        est = float(np.linalg.norm(u))
        w = u
    return est


def eigendata(A, tol: float = 1e-13, max_iter: int = 100_000, warm: np.ndarray | None = None) -> SpectralData:
    """Dominant eigenvalue with right and left eigenvectors, normalized so sigma(1) = 1 and sigma(h) = 1."""
    A = A.A if isinstance(A, TransferMatrix) else np.asarray(A)
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries (letter series diverges)")
    n = A.shape[0]
    v0 = warm if warm is not None else np.ones(n, dtype=complex)
    nonneg = bool(np.all(np.isreal(A)) and np.all(np.real(A) >= 0))
    # a positive shift makes a nonnegative irreducible matrix aperiodic
    B = A + np.min(np.real(A).sum(axis=1)) * np.eye(n) if nonneg else A
    _, h, it = _power(B, v0.astype(complex), tol, max_iter)
    _, s, _ = _power(B.T, np.ones(n, dtype=complex), tol, max_iter)
    lam = np.vdot(h, A @ h) / np.vdot(h, h)
    s = s / s.sum()
    h = h / (s @ h)
    if nonneg and abs(lam.imag) < 1e-12 * abs(lam):
        lam = complex(lam.real, 0.0)
        h, s = np.real(h), np.real(s)
        if np.min(h) <= 0 or np.min(s) < 0:
            raise ArithmeticError("Perron eigenvector not positive")
    res = float(np.linalg.norm(A @ h - lam * h) / np.linalg.norm(h))
    lres = float(np.linalg.norm(s @ A - lam * s) / np.linalg.norm(s))
    gap = _second_modulus(A, h.astype(complex), s.astype(complex)) / abs(lam)
    if res > 1e-10:
        raise ArithmeticError(f"eigen-residual {res:.2e} above 1e-10; gap estimate {gap:.3f}")
    return SpectralData(complex(lam), h, s, gap, res, lres, it)


def spectral_radius(A) -> float:
    A = A.A if isinstance(A, TransferMatrix) else np.asarray(A)
    if np.any(~np.isfinite(A)):
        return math.inf
    return abs(eigendata(A).lam)


# -- experiments built on a group and a model --------------------------------

@dataclass
class OperatorFamily:
    """z -> transfer matrix for a fixed group, model, truncation and depth.

    The additive model uses the lumped operator on factors, which is exact
    for it because weights do not depend on the point.
    """

    group: SchottkyGroup
    model: DistanceModel
    M: int = 8
    depth: int = 1
    x0: float | None = None
    basis: CylinderBasis = field(init=False)

    def __post_init__(self):
        if self.model.kind == "additive":
            self.basis = build_basis(self.group, 1, 0, lumped=True, x0=self.x0)
        else:
            self.basis = build_basis(self.group, self.depth, self.M, x0=self.x0)

    @property
    def lumped(self) -> bool:
        return self.model.kind == "additive"

    def letter_transforms(self, z) -> list:
        return [complex(s.transform(z)[0]) for s in self.model.spectra]

    def matrix(self, z) -> TransferMatrix:
        if self.lumped:
            m = self.letter_transforms(z)
            p = len(m)
            pats = []
            for j in range(p):
                P = np.zeros((p, p))
                P[:, j] = 1.0
                P[j, j] = 0.0
                pats.append(P)
            return TransferMatrix(complex(z), self.basis, lumped_matrix(m), pats)
        return build_matrix(self.group, self.model, z, self.M, self.depth, basis=self.basis)

    def extended(self, z):
        """Extended matrix with row 0 the point x0."""
        if self.lumped:
            m = self.letter_transforms(z)
            p = len(m)
            A = np.zeros((p + 1, p + 1), dtype=complex)
            A[0, 1:] = m
            A[1:, 1:] = lumped_matrix(m)
            return A
        A, _ = build_extended_matrix(self.group, self.model, z, self.M, self.depth, self.x0)
        return A

    def radius(self, s: float) -> float:
        if not all(np.isfinite(m) for m in self.letter_transforms(s)):
            return math.inf
        A = self.matrix(s).A
        return spectral_radius(A)


def estimate_delta(family: OperatorFamily, lo: float = 0.05, hi: float = 3.0, tol: float = 1e-6,
                   n_check: int = 8) -> float:
    """Bisection on spectral_radius(s) - 1, with monotonicity checked on the bracket."""
    r_lo, r_hi = family.radius(lo), family.radius(hi)
    if not (r_lo > 1.0 > r_hi):
        raise ValueError(f"bracket failure: rho({lo})={r_lo}, rho({hi})={r_hi}")
    rs = np.array([family.radius(s) for s in np.linspace(lo, hi, n_check)])
    finite = rs[np.isfinite(rs)]
    if np.any(np.diff(finite) > 1e-12):
        raise ValueError("spectral radius not monotone on the bracket")
    a, b = lo, hi
    while b - a > tol:
        c = 0.5 * (a + b)
        if family.radius(c) > 1.0:
            a = c
        else:
            b = c
    return 0.5 * (a + b)


@dataclass
class LambdaTable:
    t: np.ndarray
    lam: np.ndarray

    @property
    def one_minus(self) -> np.ndarray:
        return 1.0 - self.lam


def lambda_curve(family: OperatorFamily, delta: float, t_grid) -> LambdaTable:
    """Dominant eigenvalue along delta + it, warm-started from the real eigenvector."""
    base = eigendata(family.matrix(delta))
    lams = []
    for t in np.asarray(t_grid, float):
        if t == 0:
            lams.append(base.lam)
            continue
        lams.append(eigendata(family.matrix(delta + 1j * t), warm=base.h.astype(complex)).lam)
    return LambdaTable(np.asarray(t_grid, float), np.asarray(lams))


@dataclass
class LocalFit:
    beta: float
    amplitude: float
    phase: float
    phase_target: float
    curvature: float
    flagged: bool


def fit_local_expansion(table: LambdaTable, L=None, beta_ref: float | None = None,
                        curvature_limit: float = 0.05) -> LocalFit:
    """Regress log|1 - lambda| on log t over t > 0.

    The amplitude estimates Gamma(1-beta) E. The phase target is
    sign(t) beta pi / 2 with beta the fitted slope unless ``beta_ref`` is given.
    """
    t = table.t
    pos = t > 0
    x = np.log(t[pos])
    om = table.one_minus[pos]
    corr = np.ones_like(x) if L is None else np.asarray(L(1.0 / t[pos]), float)
    y = np.log(np.abs(om) / corr)
    c2 = np.polyfit(x, y, 2)[0] if x.size > 2 else 0.0
    b, a = np.polyfit(x, y, 1)
    phase = float(np.mean(np.angle(om)))
    ref = b if beta_ref is None else beta_ref
    return LocalFit(float(b), float(math.exp(a)), phase, float(ref * math.pi / 2.0), float(c2),
                    bool(abs(c2) > curvature_limit))


def estimate_EGamma(family: OperatorFamily, delta: float, spectral: SpectralData | None = None,
                    constants: Sequence[float] | None = None) -> float:
    """E = sum_j C_j sigma^T P_j h / sigma^T h.

    P_j holds the position factors of the heavy-tail entries of factor j, so
    this is the derivative of lambda along the tail sums times their tail
    constants.
    """
    if constants is None:
        constants = family.model.tail_constants
    tm = family.matrix(delta)
    sd = spectral if spectral is not None else eigendata(tm)
    num = 0.0
    for j, Cj in enumerate(constants):
        if Cj:
            num += Cj * float(np.real(sd.sigma @ tm.tail_pattern[j] @ sd.h))
    return num / float(np.real(sd.sigma @ sd.h))


# -- extended operator and h* ----------------------------------------------

@dataclass
class HStar:
    value: float
    error: float
    partial: np.ndarray
    ratio: float


def level_sums(family: OperatorFamily, delta: float, k_max: int) -> np.ndarray:
    """S_k = sum over words of k letters of e^{-delta d(o, gamma o)}, k = 1..k_max."""
    A = np.real(family.extended(delta))
    v = np.ones(A.shape[0])
    out = []
    for _ in range(k_max):
        v = A @ v
        out.append(float(v[0]))
    return np.asarray(out)


def h_star_x0(family: OperatorFamily, delta: float, k_max: int = 60) -> HStar:
    """lim_k S_k; the error bar is the geometric tail bound from the spectral gap."""
    S = level_sums(family, delta, k_max)
    A = np.real(family.extended(delta))
    r = eigendata(A[1:, 1:]).gap
    d = np.abs(np.diff(S))
    # last differences should shrink at least like the gap predicts
    if not r < 1 or d[-1] > 1e-3 * abs(S[-1]):
        raise ArithmeticError("partial sums are not Cauchy; delta is probably miscalibrated")
    err = float(max(d[-3:]) * r / (1.0 - r))
    return HStar(float(S[-1]), err, S, float(r))


def h_star_spectral(family: OperatorFamily, delta: float) -> float:
    """Limit of S_k from the spectral projection: (row . h)(sigma . 1)/(sigma . h)."""
    A = np.real(family.extended(delta))
    sd = eigendata(A[1:, 1:])
    row = A[0, 1:]
    return float(np.real((row @ sd.h) * sd.sigma.sum() / (sd.sigma @ sd.h)))


# -- checks -----------------------------------------------------------------

def duality_residual(family: OperatorFamily, delta: float) -> float:
    sd = eigendata(family.matrix(delta))
    A = family.matrix(delta).A
    return float(np.max(np.abs(sd.sigma @ A - sd.sigma)))


def continuity_exponent(family: OperatorFamily, delta: float, ts) -> tuple:
    """Fit ||M_{delta+it} - M_delta||_1 ~ C t^e; returns (e, C)."""
    A0 = family.matrix(delta).A
    ts = np.asarray(ts, float)
    norms = np.array([np.abs(family.matrix(delta + 1j * t).A - A0).sum(axis=0).max() for t in ts])
    e, logc = np.polyfit(np.log(ts), np.log(norms), 1)
    return float(e), float(math.exp(logc))


@dataclass
class Calibration:
    h_star: float
    rho: float
    bracket: tuple
    log: list


def calibrate_hstar(rho_of_h: Callable[[float], float], h0: float, h_lo: float = 0.0,
                    tol: float = 1e-6, n_grid: int = 6, max_iter: int = 100) -> Calibration:
    """Bisection on the shift h for rho(h) = 1, after validating the bracket."""
    log = []
    r_lo, r_hi = rho_of_h(h_lo), rho_of_h(h0)
    log += [(h_lo, r_lo), (h0, r_hi)]
    if not (r_lo < 1.0 < r_hi):
        raise ValueError(f"bracket invalid: rho({h_lo})={r_lo:.6f}, rho({h0})={r_hi:.6f}; "
                         "use a larger h0 or a higher power of the hyperbolic generators")
    grid = np.linspace(h_lo, h0, n_grid)[1:-1]
    vals = [rho_of_h(h) for h in grid]
    log += list(zip(grid, vals))
    seq = [r_lo] + vals + [r_hi]
    if np.any(np.diff(seq) < -1e-9):
        raise ValueError("rho is not monotone in the shift on the bracket")
    a, b = h_lo, h0
    fa = r_lo - 1.0
    r = r_lo
    hm = a
    for _ in range(max_iter):
        hm = 0.5 * (a + b)
        r = rho_of_h(hm)
        log.append((hm, r))
        if abs(r - 1.0) < tol:
            break
        if (r - 1.0) * fa < 0:
            b = hm
        else:
            a, fa = hm, r - 1.0
    return Calibration(hm, r, (h_lo, h0), log)


def shifted_profile_radius(group: SchottkyGroup, profile, kind: str = "synthetic", M: int = 4,
                           depth: int = 1, s: float = 0.5) -> Callable[[float], float]:
    """h -> spectral radius at s when the parabolic letters are measured on profile.with_shift(h).

    Hyperbolic letters keep their constant-curvature distances.
    """
    from .cuspmetric import ProfileParabolic

    hyp = geometric_spectra(group)[1:]

    def rho(h: float) -> float:
        par = ProfileParabolic(profile.with_shift(h))
        model = DistanceModel(kind, [par] + hyp, [0.0] * group.n_factors, profile.beta, f"shift {h}")
        return OperatorFamily(group, model, M=M, depth=depth).radius(s)

    return rho
