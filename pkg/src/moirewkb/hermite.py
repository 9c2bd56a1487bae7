"""
Polynomials times a Gaussian, the Hermite basis, and Weyl quantization of
polynomial symbols acting on them.

A GaussianPolynomial stores monomial coefficients of p_c(y) for each
component c and represents (p_1(y), ..., p_d(y)) exp(-omega y^2 / 2).
Inner products use exact Gaussian moments, so nothing here is quadrature.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .symbols import PhaseSpaceSymbol

DEGREE_CAP_FACTOR = 4


class OrthogonalityViolation(ValueError):
    """Right-hand side has a component along the kernel of the shifted oscillator."""


class DegreeOverflow(OverflowError):
    pass


def hermite_function(n, omega, y):
    """Normalized phi_{n,omega}(y) by the three-term recurrence."""
    if n < 0 or omega <= 0:
        raise ValueError("need n >= 0 and omega > 0")
    y = np.asarray(y, dtype=float)
    s = math.sqrt(omega) * y
    prev = np.zeros_like(s)
    cur = (omega / math.pi) ** 0.25 * np.exp(-0.5 * s * s)
    for k in range(n):
        prev, cur = cur, math.sqrt(2.0 / (k + 1)) * s * cur - math.sqrt(k / (k + 1)) * prev
    return cur


@lru_cache(maxsize=64)
def _moments(omega, top):
    """M[k] = int y^k exp(-omega y^2) dy for k = 0..top."""
    M = np.zeros(top + 1)
    M[0] = math.sqrt(math.pi / omega)
    for k in range(2, top + 1, 2):
        M[k] = M[k - 2] * (k - 1) / (2 * omega)
    M.setflags(write=False)
    return M


@lru_cache(maxsize=64)
def _hermite_table(omega, top):
    """B[n, k]: coefficient of y^k in the polynomial part of phi_{n,omega}."""
    B = np.zeros((top + 1, top + 1))
    B[0, 0] = (omega / math.pi) ** 0.25
    for n in range(top):
        B[n + 1, 1:] = math.sqrt(2 * omega / (n + 1)) * B[n, :-1]
        if n:
            B[n + 1] -= math.sqrt(n / (n + 1)) * B[n - 1]
    B.setflags(write=False)
    return B


def _trim(c):
    c = np.asarray(c, dtype=complex)
    nz = np.nonzero(c)[0]
    return c[: nz[-1] + 1] if nz.size else c[:1] * 0


def _pad(c, n):
    out = np.zeros(n, dtype=complex)
    out[: len(c)] = c
    return out


def _inner(c1, c2, omega):
    """<p1 e^{-w y^2/2}, p2 e^{-w y^2/2}> for monomial coefficient vectors."""
    if len(c1) == 0 or len(c2) == 0:
        return 0j
    M = _moments(omega, len(c1) + len(c2))
    conv = np.convolve(np.conj(c1), c2)
    return complex(np.dot(conv, M[: len(conv)]))


@dataclass(frozen=True)
class GaussianPolynomial:
    omega: float
    components: tuple  # tuple of complex coefficient arrays, index = monomial degree

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        object.__setattr__(self, "components", tuple(_trim(c) for c in self.components))

    @classmethod
    def zero(cls, omega, dim=2):
        return cls(omega, tuple(np.zeros(1) for _ in range(dim)))

    @classmethod
    def hermite(cls, n, omega, component=0, dim=2):
        """phi_{n,omega} placed in one component."""
        B = _hermite_table(float(omega), n)
        comps = [np.zeros(1) for _ in range(dim)]
        comps[component] = B[n, : n + 1].astype(complex)
        return cls(omega, tuple(comps))

    @property
    def dim(self):
        return len(self.components)

    @property
    def degree(self):
        return max(len(c) - 1 for c in self.components)

    def __add__(self, other):
        self._check(other)
        n = max(self.degree, other.degree) + 1
        return GaussianPolynomial(self.omega, tuple(_pad(a, n) + _pad(b, n)
                                                    for a, b in zip(self.components, other.components)))

    def __sub__(self, other):
        return self + other.scale(-1)

    def __neg__(self):
        return self.scale(-1)

    def scale(self, c):
        return GaussianPolynomial(self.omega, tuple(c * a for a in self.components))

    __mul__ = scale
    __rmul__ = scale

    def _check(self, other):
        if abs(self.omega - other.omega) > 1e-14 * self.omega or self.dim != other.dim:
            raise ValueError("incompatible Gaussian polynomials")

    def inner(self, other):
        """<self, other>, antilinear in the first slot."""
        self._check(other)
        return sum(_inner(a, b, self.omega) for a, b in zip(self.components, other.components))

    def norm(self):
        return math.sqrt(max(self.inner(self).real, 0.0))

    def component(self, c):
        return self.components[c]

    def with_component(self, c, coeffs):
        comps = list(self.components)
        comps[c] = np.asarray(coeffs, dtype=complex)
        return GaussianPolynomial(self.omega, tuple(comps))

    def parity(self, tol=0.0):
        """0 (even), 1 (odd), or None for mixed / zero."""
        seen = set()
        for c in self.components:
            for k, v in enumerate(c):
                if abs(v) > tol:
                    seen.add(k % 2)
        return seen.pop() if len(seen) == 1 else None

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        g = np.exp(-0.5 * self.omega * y * y)
        return np.stack([np.polynomial.polynomial.polyval(y, c) * g for c in self.components], axis=-1)

    def to_hermite(self, top=None):
        return HermiteCoefficients.from_polynomial(self, top)

    def to_dict(self):
        return {"omega": self.omega,
                "components": [[[float(v.real), float(v.imag)] for v in c] for c in self.components]}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["omega"], tuple(np.array([complex(a, b) for a, b in c]) for c in doc["components"]))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self, y):
        """Samples as CSV rows (y, re u_1, im u_1, re u_2, im u_2, ...)."""
        vals = self(y)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["y"]
        for c in range(self.dim):
            head += [f"re_u{c + 1}", f"im_u{c + 1}"]
        w.writerow(head)
        for yy, row in zip(np.atleast_1d(y), vals.reshape(-1, self.dim)):
            out = [f"{yy:.12g}"]
            for v in row:
                out += [f"{v.real:.12g}", f"{v.imag:.12g}"]
            w.writerow(out)
        return buf.getvalue()


@dataclass(frozen=True)
class HermiteCoefficients:
    omega: float
    coeffs: tuple  # one array per component, index = Hermite level

    @classmethod
    def from_polynomial(cls, v: GaussianPolynomial, top=None):
        top = v.degree if top is None else max(top, v.degree)
        B = _hermite_table(float(v.omega), top)
        out = []
        for c in v.components:
            rhs = _pad(c, top + 1)
            # rhs = B^T a with B lower triangular, so B^T is upper triangular
            a = np.zeros(top + 1, dtype=complex)
            for n in range(top, -1, -1):
                a[n] = (rhs[n] - B[n + 1:, n] @ a[n + 1:]) / B[n, n]
            out.append(a)
        return cls(v.omega, tuple(out))

    def to_polynomial(self):
        top = max(len(a) for a in self.coeffs) - 1
        B = _hermite_table(float(self.omega), top)
        return GaussianPolynomial(self.omega, tuple(_pad(a, top + 1) @ B for a in self.coeffs))


# Weyl quantization of polynomial symbols
def _apply_D(c, omega):
    """D = -i d/dy on p(y) exp(-omega y^2/2): coefficients of -i (p' - omega y p)."""
    out = np.zeros(len(c) + 1, dtype=complex)
    if len(c) > 1:
        out[: len(c) - 1] += np.arange(1, len(c)) * c[1:]
    out[1:] -= omega * c
    return -1j * out


def _apply_y(c, k=1):
    return np.concatenate([np.zeros(k, dtype=complex), c]) if k else c


def _weyl_monomial(a, b, c, omega):
    """(y^a eta^b)^w = 2^{-a} sum_j binom(a, j) y^{a-j} D^b y^j."""
    acc = np.zeros(len(c) + a + b, dtype=complex)
    for j in range(a + 1):
        t = _apply_y(c, j)
        for _ in range(b):
            t = _apply_D(t, omega)
        t = _apply_y(t, a - j)
        acc[: len(t)] += math.comb(a, j) * t
    return acc / 2.0**a


def _polynomial_entries(p: PhaseSpaceSymbol, h=None):
    """{(i, j): {(a, b): coeff}} with grades combined using h (or requiring grade 0 only)."""
    out = {}
    for g, i, j, (a, b, m, n, s), v in p.terms():
        if m or n or s:
            raise ValueError("apply_weyl_poly needs a polynomial symbol without phases")
        if g and h is None:
            raise ValueError("graded symbol needs a value of h")
        w = v * (h ** (g / 2.0) if g else 1.0)
        e = out.setdefault((i, j), {})
        e[(a, b)] = e.get((a, b), 0.0) + w
    return out


def apply_weyl_poly(p: PhaseSpaceSymbol, v: GaussianPolynomial, h=None, degree_cap=None):
    """Exact p^w(y, D) v for a polynomial matrix symbol p in (y, eta)."""
    if p.dim != v.dim:
        raise ValueError(f"symbol dimension {p.dim} does not match {v.dim} components")
    entries = _polynomial_entries(p, h)
    cap = degree_cap if degree_cap is not None else DEGREE_CAP_FACTOR * max(16, v.degree + 1)
    size = v.degree + 1 + max((a + b for e in entries.values() for a, b in e), default=0)
    if size - 1 > cap:
        raise DegreeOverflow(f"output degree {size - 1} exceeds cap {cap}")
    comps = [np.zeros(size, dtype=complex) for _ in range(v.dim)]
    for (i, j), e in entries.items():
        src = v.components[j]
        if not np.any(src):
            continue
        for (a, b), coef in e.items():
            t = _weyl_monomial(a, b, src, v.omega)
            comps[i][: len(t)] += coef * t
    return GaussianPolynomial(v.omega, tuple(comps))


def solve_shifted(omega, mu, lambda0, rhs, tol=1e-9):
    """Solve ((eta^2 + omega^2 y^2 + mu)^w - lambda0) u = rhs on the complement of the kernel.

    ``rhs`` is one component: a coefficient array (times exp(-omega y^2/2))
    or a one-component GaussianPolynomial.  Returns the coefficient array
    of the solution orthogonal to the kernel.
    """
    coeffs = rhs.components[0] if isinstance(rhs, GaussianPolynomial) else np.asarray(rhs, dtype=complex)
    v = GaussianPolynomial(omega, (coeffs,))
    a = HermiteCoefficients.from_polynomial(v).coeffs[0]
    norm = v.norm()
    levels = np.arange(len(a))
    denom = (2 * levels + 1) * omega + mu - lambda0
    kernel = np.abs(denom) < 1e-12 * max(1.0, abs(lambda0), omega)
    if np.any(kernel) and np.max(np.abs(a[kernel])) > tol * max(norm, 1e-300) and norm > 0:
        raise OrthogonalityViolation(
            f"right-hand side has weight {np.max(np.abs(a[kernel])):.3e} on the kernel level "
            f"{int(levels[kernel][0])} (norm {norm:.3e})")
    sol = np.where(kernel, 0.0, a / np.where(kernel, 1.0, denom))
    return HermiteCoefficients(omega, (sol,)).to_polynomial().components[0]


# Galerkin matrices in the Hermite basis
def _ladder_ops(omega, size):
    """Matrices of y and D = -i d/dy in the basis phi_0..phi_{size-1}."""
    k = np.sqrt(np.arange(1, size))
    A = np.diag(k, 1)  # annihilation
    Ad = A.T
    Y = (A + Ad) / math.sqrt(2 * omega)
    D = 1j * math.sqrt(omega / 2) * (Ad - A)
    return Y, D


def _as_series(S, h):
    """Combine a NormalForm / list of T_j / graded symbol into one matrix polynomial at h."""
    from .symbols import NormalForm
    if isinstance(S, NormalForm):
        S = S.T
    if isinstance(S, (list, tuple)):
        out = PhaseSpaceSymbol.zero(S[0].dim)
        for j, T in enumerate(S):
            out = out + T.scale(h ** (j / 2.0))
        return out, None
    return S, h


def galerkin_matrix(S, omega, N, h=None):
    """Matrix of S^w(y, D) on span{phi_n e_c : n <= N}.

    Index of phi_n e_c is ``d * n + c`` (components interleaved).  S is a
    polynomial symbol, a list of graded terms T_j (combined as
    sum_j h^{j/2} T_j) or a NormalForm.  Entries are exact: the ladder
    matrices are built on an enlarged basis so that truncation never
    touches the retained block.
    """
    P, hh = _as_series(S, h)
    entries = _polynomial_entries(P, hh)
    d = P.dim
    deg = max((a + b for e in entries.values() for a, b in e), default=0)
    size = N + 1 + deg
    Y, D = _ladder_ops(omega, size)
    powY = [np.eye(size)]
    for _ in range(deg):
        powY.append(powY[-1] @ Y)
    powD = [np.eye(size)]
    for _ in range(deg):
        powD.append(powD[-1] @ D)
    cache = {}

    def weyl(a, b):
        if (a, b) not in cache:
            acc = np.zeros((size, size), dtype=complex)
            for j in range(a + 1):
                acc += math.comb(a, j) * powY[a - j] @ powD[b] @ powY[j]
            cache[(a, b)] = acc[: N + 1, : N + 1] / 2.0**a
        return cache[(a, b)]

    G = np.zeros((d * (N + 1), d * (N + 1)), dtype=complex)
    for (i, j), e in entries.items():
        blk = sum(c * weyl(a, b) for (a, b), c in e.items())
        G[i::d, j::d] += blk
    return G


def galerkin_vector(v: GaussianPolynomial, N):
    """Hermite coefficients of v in the interleaved Galerkin ordering."""
    hc = HermiteCoefficients.from_polynomial(v, N)
    d = v.dim
    out = np.zeros(d * (N + 1), dtype=complex)
    for c, a in enumerate(hc.coeffs):
        out[c::d] = a[: N + 1]
    return out


def from_galerkin_vector(vec, omega, dim=2):
    return HermiteCoefficients(omega, tuple(np.asarray(vec[c::dim]) for c in range(dim))).to_polynomial()
