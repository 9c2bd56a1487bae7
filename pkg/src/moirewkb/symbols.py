"""
Matrix-valued phase-space symbols built from monomials and Fourier phases.

A term is ``c * x**a * xi**b * exp(2j*pi*(m*x + n*xi)) * exp(2j*pi**2*s*h)``.
The last factor (integer ``s``) records the exact h-dependence produced when
two Fourier phases are composed, so products of trigonometric polynomials
never need to be truncated.  Grades are stored as twice the power of h.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

DROP_TOL = 1e-14
PI2 = 2.0 * math.pi**2


@dataclass(frozen=True)
class SymbolTerm:
    coeff: complex
    xdeg: int = 0
    xideg: int = 0
    xfreq: int = 0
    xifreq: int = 0
    hphase: int = 0

    @property
    def key(self):
        return (self.xdeg, self.xideg, self.xfreq, self.xifreq, self.hphase)


def _clean(entry):
    return {k: complex(v) for k, v in entry.items() if abs(v) > DROP_TOL}


def _add_into(target, entry, scale=1.0):
    for k, v in entry.items():
        target[k] = target.get(k, 0.0) + scale * v


class PhaseSpaceSymbol:
    """Graded d x d matrix of term sums.

    ``grades`` maps an integer ``g`` (meaning the factor ``h**(g/2)``) to a
    dict ``{(row, col): {(a, b, m, n, s): coeff}}``.  Instances are treated
    as immutable; every operation returns a new symbol.
    """

    def __init__(self, dim, grades=None):
        self.dim = int(dim)
        clean = {}
        for g, mat in (grades or {}).items():
            cm = {}
            for (i, j), entry in mat.items():
                if not (0 <= i < self.dim and 0 <= j < self.dim):
                    raise ValueError(f"entry ({i},{j}) outside a {self.dim}x{self.dim} symbol")
                e = _clean(entry)
                if e:
                    cm[(i, j)] = e
            if cm:
                clean[int(g)] = cm
        self.grades = clean

    # construction helpers
    @classmethod
    def zero(cls, dim):
        return cls(dim)

    @classmethod
    def scalar(cls, terms, dim=1, grade=0):
        """``terms``: iterable of SymbolTerm or dict {key: coeff}; placed on the diagonal."""
        entry = {}
        if isinstance(terms, dict):
            entry = dict(terms)
        else:
            for t in terms:
                entry[t.key] = entry.get(t.key, 0.0) + t.coeff
        return cls(dim, {grade: {(i, i): dict(entry) for i in range(dim)}})

    @classmethod
    def constant(cls, matrix, grade=0):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        d = matrix.shape[0]
        mat = {(i, j): {(0, 0, 0, 0, 0): matrix[i, j]} for i in range(d) for j in range(d)}
        return cls(d, {grade: mat})

    @classmethod
    def from_blocks(cls, blocks):
        """Assemble from a nested list of scalar (dim 1) symbols or None."""
        d = len(blocks)
        grades = {}
        for i, row in enumerate(blocks):
            for j, s in enumerate(row):
                if s is None:
                    continue
                for g, mat in s.grades.items():
                    if (0, 0) in mat:
                        grades.setdefault(g, {})[(i, j)] = dict(mat[(0, 0)])
        return cls(d, grades)

    # basic algebra
    def __add__(self, other):
        other = self._coerce(other)
        grades = {}
        for src in (self, other):
            for g, mat in src.grades.items():
                gm = grades.setdefault(g, {})
                for ij, entry in mat.items():
                    _add_into(gm.setdefault(ij, {}), entry)
        return PhaseSpaceSymbol(self.dim, grades)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, c):
        if isinstance(c, PhaseSpaceSymbol):
            raise TypeError("use moyal_product or pointwise_product for symbol products")
        return self.scale(c)

    __rmul__ = __mul__

    def _coerce(self, other):
        if isinstance(other, PhaseSpaceSymbol):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other
        return PhaseSpaceSymbol.constant(np.eye(self.dim) * other)

    def scale(self, c):
        c = complex(c)
        return PhaseSpaceSymbol(self.dim, {
            g: {ij: {k: c * v for k, v in e.items()} for ij, e in mat.items()}
            for g, mat in self.grades.items()})

    def times_h(self, half_powers=2):
        """Multiply by h**(half_powers/2)."""
        return PhaseSpaceSymbol(self.dim, {g + half_powers: mat for g, mat in self.grades.items()})

    def adjoint(self):
        """Pointwise conjugate transpose (h, x, xi real)."""
        grades = {}
        for g, mat in self.grades.items():
            grades[g] = {(j, i): {(a, b, -m, -n, -s): np.conj(v) for (a, b, m, n, s), v in e.items()}
                         for (i, j), e in mat.items()}
        return PhaseSpaceSymbol(self.dim, grades)

    def matmul_const(self, left=None, right=None):
        """Return ``left @ S @ right`` for constant numeric matrices."""
        d = self.dim
        L = np.eye(d) if left is None else np.asarray(left, dtype=complex)
        R = np.eye(d) if right is None else np.asarray(right, dtype=complex)
        dout_r, dout_c = L.shape[0], R.shape[1]
        if dout_r != dout_c:
            raise ValueError("result must be square")
        grades = {}
        for g, mat in self.grades.items():
            out = {}
            for (k, l), e in mat.items():
                for i in range(dout_r):
                    if L[i, k] == 0:
                        continue
                    for j in range(dout_c):
                        c = L[i, k] * R[l, j]
                        if c != 0:
                            _add_into(out.setdefault((i, j), {}), e, c)
            grades[g] = out
        return PhaseSpaceSymbol(dout_r, grades)

    def block(self, rows, cols=None):
        cols = rows if cols is None else cols
        pos_r = {r: i for i, r in enumerate(rows)}
        pos_c = {c: j for j, c in enumerate(cols)}
        grades = {}
        for g, mat in self.grades.items():
            grades[g] = {(pos_r[i], pos_c[j]): e for (i, j), e in mat.items()
                         if i in pos_r and j in pos_c}
        return PhaseSpaceSymbol(len(rows), grades)

    def entry(self, i, j):
        return PhaseSpaceSymbol(1, {g: {(0, 0): mat[(i, j)]} for g, mat in self.grades.items()
                                    if (i, j) in mat})

    def grade(self, g):
        """The part multiplying h**(g/2), returned at grade 0."""
        return PhaseSpaceSymbol(self.dim, {0: self.grades.get(g, {})})

    def truncate(self, max_half_order):
        if max_half_order is None:
            return self
        return PhaseSpaceSymbol(self.dim, {g: m for g, m in self.grades.items() if g <= max_half_order})

    def terms(self):
        """Iterate over (grade, row, col, key, coeff)."""
        for g, mat in sorted(self.grades.items()):
            for (i, j), e in sorted(mat.items()):
                for k, v in sorted(e.items()):
                    yield g, i, j, k, v

    @property
    def is_zero(self):
        return not self.grades

    @property
    def has_phases(self):
        return any(k[2] or k[3] for _, _, _, k, _ in self.terms())

    @property
    def has_hphase(self):
        return any(k[4] for _, _, _, k, _ in self.terms())

    def max_abs_coeff(self):
        return max((abs(v) for *_, v in self.terms()), default=0.0)

    def to_h_series(self, max_half_order):
        """Expand the exact h-phase factors into powers of h up to ``max_half_order``."""
        grades = {}
        for g, i, j, (a, b, m, n, s), v in self.terms():
            if s == 0:
                _add_into(grades.setdefault(g, {}).setdefault((i, j), {}), {(a, b, m, n, 0): v})
                continue
            jmax = (max_half_order - g) // 2
            for p in range(jmax + 1):
                c = v * (1j * PI2 * s) ** p / math.factorial(p)
                _add_into(grades.setdefault(g + 2 * p, {}).setdefault((i, j), {}),
                          {(a, b, m, n, 0): c})
        return PhaseSpaceSymbol(self.dim, grades)

    def __call__(self, x, xi, h):
        return eval_symbol(self, x, xi, h)

    def __repr__(self):
        nterms = sum(1 for _ in self.terms())
        return f"PhaseSpaceSymbol(dim={self.dim}, grades={sorted(self.grades)}, terms={nterms})"

    # serialization
    def to_dict(self):
        out = []
        for g, mat in sorted(self.grades.items()):
            entries = []
            for (i, j), e in sorted(mat.items()):
                entries.append({"row": i, "col": j, "terms": [
                    {"re": v.real, "im": v.imag, "a": a, "b": b, "m": m, "n": n, "s": s}
                    for (a, b, m, n, s), v in sorted(e.items())]})
            out.append({"half_order": g, "entries": entries})
        return {"dim": self.dim, "grades": out}

    @classmethod
    def from_dict(cls, doc):
        grades = {}
        for gd in doc["grades"]:
            mat = {}
            for ent in gd["entries"]:
                e = {}
                for t in ent["terms"]:
                    key = (t["a"], t["b"], t["m"], t["n"], t.get("s", 0))
                    e[key] = e.get(key, 0.0) + complex(t["re"], t["im"])
                mat[(ent["row"], ent["col"])] = e
            grades[gd["half_order"]] = mat
        return cls(doc["dim"], grades)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# scalar building blocks
def monomial(a=0, b=0, coeff=1.0, dim=1):
    return PhaseSpaceSymbol.scalar({(a, b, 0, 0, 0): coeff}, dim)


def x_symbol(dim=1):
    return monomial(1, 0, dim=dim)


def xi_symbol(dim=1):
    return monomial(0, 1, dim=dim)


def fourier(coeffs, variable="x", dim=1):
    """Trigonometric polynomial ``sum_k c_k exp(2 pi i k var)`` from ``{k: c_k}``."""
    if variable == "x":
        entry = {(0, 0, k, 0, 0): c for k, c in coeffs.items()}
    elif variable == "xi":
        entry = {(0, 0, 0, k, 0): c for k, c in coeffs.items()}
    else:
        raise ValueError("variable must be 'x' or 'xi'")
    return PhaseSpaceSymbol.scalar(entry, dim)


def cos_sym(variable="x", freq=1, dim=1):
    return fourier({freq: 0.5, -freq: 0.5}, variable, dim)


def sin_sym(variable="x", freq=1, dim=1):
    return fourier({freq: -0.5j, -freq: 0.5j}, variable, dim)


def pointwise_product(A, B):
    """Classical (commutative in scalars) matrix product of symbols, grades added."""
    return moyal_product(A, B, max_half_order=None, _classical=True)


# Moyal product
def _term_product(ka, kb, max_k, classical=False):
    """Compose two terms.  Returns list of (extra_half_order, key, factor)."""
    a, b, m, n, s = ka
    c, d, mp, np_, sp = kb
    s_out = s + sp + (n * mp - m * np_)
    # remaining operator on the polynomial parts, nilpotent
    kxa, kxia = 2j * math.pi * m, 2j * math.pi * n
    kxb, kxib = 2j * math.pi * mp, 2j * math.pi * np_
    out = []
    state = {(a, b, c, d): 1.0 + 0j}
    k = 0
    while state:
        pref = (0.5j) ** k / math.factorial(k)
        for (aa, bb, cc, dd), v in state.items():
            if v != 0:
                out.append((2 * k, (aa + cc, bb + dd, m + mp, n + np_, s_out), pref * v))
        if classical or (max_k is not None and k >= max_k):
            break
        new = {}

        def push(key, val):
            if val != 0:
                new[key] = new.get(key, 0.0) + val

        for (aa, bb, cc, dd), v in state.items():
            push((aa - 1, bb, cc, dd - 1), v * aa * dd)
            push((aa, bb, cc, dd - 1), v * kxa * dd)
            push((aa - 1, bb, cc, dd), v * aa * kxib)
            push((aa, bb - 1, cc - 1, dd), -v * bb * cc)
            push((aa, bb, cc - 1, dd), -v * kxia * cc)
            push((aa, bb - 1, cc, dd), -v * bb * kxb)
        state = {kk: vv for kk, vv in new.items() if abs(vv) > 0}
        k += 1
    if classical:
        # the classical product keeps the plain phase product
        return [(0, (a + c, b + d, m + mp, n + np_, s + sp), 1.0)]
    return out


def moyal_product(A, B, max_half_order=None, _classical=False):
    """Weyl composition symbol A#B.

    Convention: ``x # xi - xi # x = i h``.  Phase factors are composed
    exactly through the integer h-phase, so for pure trigonometric
    polynomials the result is exact.  Grades above ``max_half_order``
    (twice the power of h) are dropped; ``None`` keeps everything, which
    always terminates because polynomial degrees are finite.
    """
    if A.dim != B.dim:
        raise ValueError(f"dimension mismatch: {A.dim} vs {B.dim}")
    d = A.dim
    grades = {}
    cache = {}
    for ga, mata in A.grades.items():
        for gb, matb in B.grades.items():
            base = ga + gb
            if max_half_order is not None and base > max_half_order:
                continue
            max_k = None if max_half_order is None else (max_half_order - base) // 2
            for (i, l), ea in mata.items():
                for j in range(d):
                    eb = matb.get((l, j))
                    if eb is None:
                        continue
                    for ka, va in ea.items():
                        for kb, vb in eb.items():
                            ck = (ka, kb, max_k, _classical)
                            res = cache.get(ck)
                            if res is None:
                                res = _term_product(ka, kb, max_k, _classical)
                                cache[ck] = res
                            vab = va * vb
                            for dg, key, fac in res:
                                tgt = grades.setdefault(base + dg, {}).setdefault((i, j), {})
                                tgt[key] = tgt.get(key, 0.0) + vab * fac
    return PhaseSpaceSymbol(d, grades)


def commutator(A, B, max_half_order=None):
    return moyal_product(A, B, max_half_order) - moyal_product(B, A, max_half_order)


def symmetric_anticommutator(A, B, max_half_order=None):
    """A#B + B#A."""
    return moyal_product(A, B, max_half_order) + moyal_product(B, A, max_half_order)


# evaluation
def _eval_entry(entry, x, xi, h):
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(np.broadcast(x, xi).shape, dtype=complex)
    for (a, b, m, n, s), v in entry.items():
        t = v * np.exp(2j * math.pi * (m * x + n * xi) + 1j * PI2 * s * h)
        if a:
            t = t * x**a
        if b:
            t = t * xi**b
        out = out + t
    return out


def eval_symbol(S, x, xi, h):
    """Evaluate the full symbol at (x, xi, h); arrays broadcast, matrix axes last."""
    shape = np.broadcast(np.asarray(x), np.asarray(xi)).shape
    out = np.zeros(shape + (S.dim, S.dim), dtype=complex)
    for g, mat in S.grades.items():
        hp = h ** (g / 2.0) if g else 1.0
        for (i, j), e in mat.items():
            out[..., i, j] += hp * _eval_entry(e, x, xi, h)
    return out


def principal_part(S):
    """Grade-0 part evaluated in the limit h -> 0 (h-phases set to 1)."""
    mat = S.grades.get(0, {})
    grades = {0: {}}
    for ij, e in mat.items():
        ne = {}
        for (a, b, m, n, s), v in e.items():
            ne[(a, b, m, n, 0)] = ne.get((a, b, m, n, 0), 0.0) + v
        grades[0][ij] = ne
    return PhaseSpaceSymbol(S.dim, grades)


def principal_eigenvalues(S, x, xi):
    """Closed-form eigenvalues (ascending) of the Hermitian 2x2 principal symbol."""
    if S.dim != 2:
        raise ValueError("principal_eigenvalues needs a 2x2 symbol")
    M = eval_symbol(principal_part(S), x, xi, 0.0)
    a = M[..., 0, 0].real
    d = M[..., 1, 1].real
    b = M[..., 0, 1]
    mean = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + np.abs(b) ** 2)
    return mean - rad, mean + rad


def det_principal(S, x, xi):
    M = eval_symbol(principal_part(S), x, xi, 0.0)
    return np.linalg.det(M).real


def is_hermitian(S, npts=50, h=0.013, tol=1e-12, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, npts)
    xi = rng.uniform(-1, 1, npts)
    M = eval_symbol(S, x, xi, h)
    scale = max(1.0, float(np.abs(M).max()))
    return bool(np.abs(M - np.conj(np.swapaxes(M, -1, -2))).max() <= tol * scale)


def differentiate(S, wrt="x"):
    """Exact partial derivative in x or xi (h-phases are constants)."""
    if wrt not in ("x", "xi"):
        raise ValueError("wrt must be 'x' or 'xi'")
    grades = {}
    for g, i, j, (a, b, m, n, s), v in S.terms():
        deg, freq = (a, m) if wrt == "x" else (b, n)
        tgt = grades.setdefault(g, {}).setdefault((i, j), {})
        if deg:
            key = (a - 1, b, m, n, s) if wrt == "x" else (a, b - 1, m, n, s)
            tgt[key] = tgt.get(key, 0.0) + deg * v
        if freq:
            key = (a, b, m, n, s)
            tgt[key] = tgt.get(key, 0.0) + 2j * math.pi * freq * v
    return PhaseSpaceSymbol(S.dim, grades)


# Taylor expansion and rescaling
def _taylor_term(key, v, x0, xi0, max_degree):
    """Taylor coefficients of one term in (X, XI) = (x - x0, xi - xi0)."""
    a, b, m, n, s = key
    ex = v * np.exp(2j * math.pi * (m * x0 + n * xi0))

    def series(deg, freq, centre):
        # coefficients of t**k for (centre + t)**deg * exp(2 pi i freq t)
        poly = np.zeros(max_degree + 1, dtype=complex)
        for i in range(min(deg, max_degree) + 1):
            poly[i] = math.comb(deg, i) * centre ** (deg - i)
        ph = np.array([(2j * math.pi * freq) ** k / math.factorial(k) for k in range(max_degree + 1)])
        return np.convolve(poly, ph)[: max_degree + 1]

    sx = series(a, m, x0)
    sxi = series(b, n, xi0)
    out = {}
    for i in range(max_degree + 1):
        if sx[i] == 0:
            continue
        for j in range(max_degree + 1 - i):
            c = ex * sx[i] * sxi[j]
            if c != 0:
                out[(i, j, 0, 0, s)] = out.get((i, j, 0, 0, s), 0.0) + c
    return out


def taylor_expand(S, x0, xi0, max_degree):
    """Polynomial in the shifted variables (x - x0, xi - xi0) up to total ``max_degree``.

    The returned symbol uses x and xi to mean the shifted coordinates.
    """
    grades = {}
    for g, i, j, key, v in S.terms():
        tgt = grades.setdefault(g, {}).setdefault((i, j), {})
        _add_into(tgt, _taylor_term(key, v, x0, xi0, max_degree))
    return PhaseSpaceSymbol(S.dim, grades)


def homogeneous_part(S, degree):
    return PhaseSpaceSymbol(S.dim, {
        g: {ij: {k: v for k, v in e.items() if k[0] + k[1] == degree} for ij, e in mat.items()}
        for g, mat in S.grades.items()})


def polynomial_degree(S):
    return max((k[0] + k[1] for *_, k, _ in S.terms()), default=0)


@dataclass
class WellCandidate:
    x0: float
    xi0: float
    a: float = 1.0
    b: float = 1.0
    degenerate: bool = True
    omega: float = float("nan")
    mu1: float = float("nan")
    mu2: float = float("nan")


class NormalFormError(ValueError):
    """Rescaled symbol does not have the harmonic diagonal form or the required parity."""


@dataclass
class NormalForm:
    """Graded polynomial series T_0..T_k of a symbol rescaled at a well."""
    T: list
    omega: float
    mu1: float
    mu2: float
    x0: float = 0.0
    xi0: float = 0.0

    @property
    def order(self):
        return len(self.T) - 1

    def to_dict(self):
        return {"omega": self.omega, "mu1": self.mu1, "mu2": self.mu2,
                "x0": self.x0, "xi0": self.xi0, "T": [t.to_dict() for t in self.T]}

    @classmethod
    def from_dict(cls, doc):
        return cls([PhaseSpaceSymbol.from_dict(t) for t in doc["T"]], doc["omega"],
                   doc["mu1"], doc["mu2"], doc.get("x0", 0.0), doc.get("xi0", 0.0))


def harmonic_normal_form(omega, mu1, mu2, extra=()):
    """Series with T_0 = diag(eta^2 + omega^2 y^2 + mu_j) followed by ``extra`` terms."""
    T0 = PhaseSpaceSymbol(2, {0: {
        (0, 0): {(0, 2, 0, 0, 0): 1.0, (2, 0, 0, 0, 0): omega**2, (0, 0, 0, 0, 0): mu1},
        (1, 1): {(0, 2, 0, 0, 0): 1.0, (2, 0, 0, 0, 0): omega**2, (0, 0, 0, 0, 0): mu2}}})
    return NormalForm([T0, *extra], omega, mu1, mu2)


def parity_ok(T, parity, tol=1e-10):
    """All entries have only even (parity 0) or only odd (parity 1) total degree."""
    for *_, k, v in T.terms():
        if (k[0] + k[1]) % 2 != parity and abs(v) > tol:
            return False
    return True


def rescale_to_well(S, well, k, tol=1e-9):
    """Series T_j, j = 0..k, of S(x0 + sqrt(h) y, xi0 + sqrt(h) eta) = h sum_j h^{j/2} T_j.

    S must be normalized so that the eta^2 coefficient of T_0 is one.
    Raises NormalFormError if T_0 is not diag(eta^2 + omega^2 y^2 + mu_j),
    if lower-order parts do not vanish, or if parities are violated.
    """
    top = 2 + k
    Sh = S.to_h_series(top)
    scale = max(1.0, Sh.max_abs_coeff())
    taylors = {g: taylor_expand(Sh.grade(g), well.x0, well.xi0, top - g) for g in Sh.grades if g <= top}
    for g, Tg in taylors.items():
        for d in range(max(0, 2 - g)):
            low = homogeneous_part(Tg, d)
            if low.max_abs_coeff() > tol * scale:
                raise NormalFormError(f"symbol does not vanish to second order at the well (grade {g}, degree {d})")
    T = []
    for j in range(k + 1):
        acc = PhaseSpaceSymbol.zero(S.dim)
        for g, Tg in taylors.items():
            d = 2 + j - g
            if d >= 0:
                acc = acc + homogeneous_part(Tg, d)
        T.append(acc)
    omega, mu1, mu2 = _check_T0(T[0], tol * scale)
    for j in range(1, k + 1):
        if not parity_ok(T[j], j % 2, tol * scale):
            raise NormalFormError(f"T_{j} violates the parity class")
    well.omega, well.mu1, well.mu2 = omega, mu1, mu2
    return NormalForm(T, omega, mu1, mu2, well.x0, well.xi0)


def _check_T0(T0, tol):
    if T0.dim != 2:
        raise NormalFormError("normal form needs a 2x2 block")
    allowed = {(0, 2, 0, 0, 0), (2, 0, 0, 0, 0), (0, 0, 0, 0, 0)}
    mat = T0.grades.get(0, {})
    for (i, j), e in mat.items():
        for key, v in e.items():
            if abs(v) <= tol:
                continue
            if i != j or key not in allowed:
                raise NormalFormError(f"T_0 has a stray term {key} in entry ({i},{j})")
    d0 = mat.get((0, 0), {})
    d1 = mat.get((1, 1), {})
    e2 = [d0.get((0, 2, 0, 0, 0), 0), d1.get((0, 2, 0, 0, 0), 0)]
    y2 = [d0.get((2, 0, 0, 0, 0), 0), d1.get((2, 0, 0, 0, 0), 0)]
    if max(abs(e2[0] - 1), abs(e2[1] - 1)) > tol:
        raise NormalFormError(f"eta^2 coefficients {e2} are not normalized to one")
    if abs(y2[0] - y2[1]) > tol or y2[0].real <= 0:
        raise NormalFormError(f"y^2 coefficients {y2} differ or are not positive")
    omega = math.sqrt(y2[0].real)
    mu1 = d0.get((0, 0, 0, 0, 0), 0).real
    mu2 = d1.get((0, 0, 0, 0, 0), 0).real
    return omega, mu1, mu2
