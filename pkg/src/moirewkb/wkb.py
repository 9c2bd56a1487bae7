"""
Quasimodes at a degenerate well from the normal form series T_0, T_1, ...

``wkb_recurrence`` solves sum_{i<=k} (T_i^w - lambda_i) u_{k-i} = 0 order by
order in sqrt(h).  When the two oscillator branches resonate the recurrence
can hit a kernel it cannot invert; ``resonant_expansion`` then recovers the
expansion by fitting Galerkin eigenpairs over a geometric grid of h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hermite import (GaussianPolynomial, OrthogonalityViolation, apply_weyl_poly, galerkin_matrix,
                      from_galerkin_vector, solve_shifted)
from .symbols import NormalForm, PhaseSpaceSymbol, parity_ok

DEFAULT_H_GRID = tuple(2.0 ** -k for k in range(6, 13))


class ResonantObstruction(RuntimeError):
    """The second-branch kernel blocks the recurrence at ``step``."""

    def __init__(self, step, detail=""):
        super().__init__(f"resonant obstruction at order {step}: {detail}")
        self.step = step


class FitDiagnostics(RuntimeError):
    """Least-squares fit in powers of sqrt(h) is not trustworthy."""


@dataclass(frozen=True)
class ResonanceClass:
    resonant: bool
    witness: int | None = None


def classify_resonance(mu1, mu2, omega, tol=1e-9):
    """Resonant iff mu1 - mu2 = (4l + 2) omega for an integer l (returned as witness)."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    r = (mu1 - mu2) / omega - 2.0
    l = round(r / 4.0)
    if abs(r - 4 * l) <= tol * max(1.0, abs(r)):
        return ResonanceClass(True, int(l))
    return ResonanceClass(False, None)


@dataclass
class WkbExpansion:
    n: int
    branch: int
    omega: float
    mu1: float
    mu2: float
    lambdas: list
    modes: list
    diagnostics: dict = field(default_factory=dict)

    @property
    def order(self):
        return len(self.lambdas) - 1

    def eigenvalue(self, h):
        """h * sum_i h^{i/2} lambda_i."""
        return h * sum(l * h ** (i / 2) for i, l in enumerate(self.lambdas))

    def quasimode(self, h):
        out = self.modes[0]
        for i, u in enumerate(self.modes[1:], start=1):
            out = out + u.scale(h ** (i / 2))
        return out

    def to_dict(self):
        return {"n": self.n, "branch": self.branch, "omega": self.omega, "mu1": self.mu1, "mu2": self.mu2,
                "lambdas": [float(np.real(l)) for l in self.lambdas],
                "modes": [u.to_dict() for u in self.modes], "diagnostics": self.diagnostics}


def _series(T):
    if isinstance(T, NormalForm):
        return list(T.T), T.omega, T.mu1, T.mu2
    raise TypeError("expected a NormalForm")


def _parity_clean(Tj, parity, tol=1e-10):
    """Drop sub-tolerance terms of the wrong parity; reject anything larger."""
    if not parity_ok(Tj, parity, tol * max(1.0, Tj.max_abs_coeff())):
        raise ValueError("normal form term violates its parity class")
    grades = {g: {ij: {k: v for k, v in e.items() if (k[0] + k[1]) % 2 == parity}
                  for ij, e in mat.items()} for g, mat in Tj.grades.items()}
    return PhaseSpaceSymbol(Tj.dim, grades)


def wkb_recurrence(T, n, branch, ell):
    """Non-resonant quasimode expansion to order 2*ell in sqrt(h).

    ``T`` is a NormalForm with at least 2*ell + 1 terms.  ``branch`` is 1 or
    2.  Raises ResonantObstruction when the other branch's kernel is hit.
    """
    Ts, omega, mu1, mu2 = _series(T)
    if branch not in (1, 2):
        raise ValueError("branch must be 1 or 2")
    if len(Ts) < 2 * ell + 1:
        raise ValueError(f"need T_0..T_{2 * ell}, got {len(Ts)} terms")
    Ts = [_parity_clean(Tj, j % 2) for j, Tj in enumerate(Ts[: 2 * ell + 1])]
    j = branch - 1
    mus = (mu1, mu2)
    lam = [(2 * n + 1) * omega + mus[j]]
    u = [GaussianPolynomial.hermite(n, omega, component=j)]
    for k in range(1, 2 * ell + 1):
        known = GaussianPolynomial.zero(omega)
        for i in range(1, k + 1):
            known = known - apply_weyl_poly(Ts[i], u[k - i])
            if i < k and lam[i] != 0:
                known = known + u[k - i].scale(lam[i])
        lk = -u[0].inner(known)
        if k % 2:
            if lk != 0:
                raise ArithmeticError(f"odd-order eigenvalue correction {lk!r} is not exactly zero")
            lk = 0.0
        else:
            lk = lk.real
        lam.append(lk)
        rhs = known + u[0].scale(lk)
        comps = []
        for c in range(2):
            try:
                comps.append(solve_shifted(omega, mus[c], lam[0], rhs.components[c]))
            except OrthogonalityViolation as exc:
                if c == j:
                    raise
                raise ResonantObstruction(k, str(exc)) from exc
        u.append(GaussianPolynomial(omega, tuple(comps)))
    return WkbExpansion(n, branch, omega, mu1, mu2, lam, u)


def residual_norms(expansion: WkbExpansion, T, h_grid):
    """|| h (sum_j h^{j/2} T_j^w - sum_i h^{i/2} lambda_i) u(h) ||_{L^2} for each h."""
    Ts, *_ = _series(T)
    out = []
    for h in h_grid:
        v = expansion.quasimode(h)
        r = GaussianPolynomial.zero(v.omega)
        for j, Tj in enumerate(Ts):
            r = r + apply_weyl_poly(Tj, v).scale(h ** (j / 2))
        lam = sum(l * h ** (i / 2) for i, l in enumerate(expansion.lambdas))
        r = r - v.scale(lam)
        out.append(h * r.norm())
    return np.array(out)


def residual_order(expansion: WkbExpansion, T, h_grid=DEFAULT_H_GRID, floor=1e-13):
    """Log-log slope of the quasimode residual against h (nan if at machine zero)."""
    h = np.asarray(h_grid, dtype=float)
    r = residual_norms(expansion, T, h)
    if np.all(r <= floor * h):
        return float("nan")
    return float(np.polyfit(np.log(h), np.log(r), 1)[0])


# resonant route
def harmonic_levels(omega, mu1, mu2, count):
    """Sorted (value, hermite_level, branch) of T_0's spectrum."""
    levels = []
    for m in range(count):
        levels.append(((2 * m + 1) * omega + mu1, m, 1))
        levels.append(((2 * m + 1) * omega + mu2, m, 2))
    return sorted(levels)


def _fit(h, values, order):
    """Least squares values(h) ~ sum_{i=1..order} c_i h^{i/2} (columns of values)."""
    s = np.sqrt(h)
    A = np.stack([s**i for i in range(1, order + 1)], axis=1)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    resid = values - A @ coef
    return coef, resid


def resonant_expansion(T, n, ell, h_grid=DEFAULT_H_GRID, N=64, check_fit=True):
    """Expansions of the eigenvalues of T^w/h that tend to e_n (levels counted from 1).

    Returns one WkbExpansion per eigenvalue in the cluster (two for a
    double e_n).  Each carries lambdas [e_n, a0, a1, ...] and fitted modes.
    """
    Ts, omega, mu1, mu2 = _series(T)
    h = np.sort(np.asarray(h_grid, dtype=float))[::-1]
    if len(h) < 6:
        raise ValueError("need at least 6 values of h")
    levels = harmonic_levels(omega, mu1, mu2, n + 4)
    e_n = levels[n - 1][0]
    refs = [(m, b) for val, m, b in levels if abs(val - e_n) <= 1e-9 * max(1.0, abs(e_n))]
    order = 2 * ell
    nref = len(refs)
    ref_vecs = []
    for m, b in refs:
        r = np.zeros(2 * (N + 1), dtype=complex)
        r[2 * m + (b - 1)] = 1.0
        ref_vecs.append(r)
    R = np.stack(ref_vecs, axis=1)
    evals = np.zeros((len(h), nref))
    evecs = np.zeros((len(h), 2 * (N + 1), nref), dtype=complex)
    for t, hh in enumerate(h):
        G = galerkin_matrix(Ts, omega, N, hh)
        w, V = np.linalg.eigh(0.5 * (G + G.conj().T))
        # candidates: the eigenvectors with the largest weight on the reference space
        weight = np.linalg.norm(R.conj().T @ V, axis=0)
        cand = np.argsort(-weight)[:nref]
        cand = cand[np.argsort(w[cand])]
        Vc = V[:, cand]
        O = R.conj().T @ Vc  # overlaps, refs x candidates
        if nref == 2 and abs(w[cand[1]] - w[cand[0]]) < 1e-9:
            # degenerate pair: rotate onto the references
            U, _, Wh = np.linalg.svd(O.conj().T)
            Vc = Vc @ (U @ Wh)
            lam_c = np.array([(v.conj() @ G @ v).real for v in Vc.T])
        else:
            perm = [0, 1] if nref == 1 or abs(O[0, 0]) * abs(O[1, 1]) >= abs(O[0, 1]) * abs(O[1, 0]) else [1, 0]
            perm = perm[:nref]
            Vc = Vc[:, perm]
            lam_c = w[cand][perm]
        # phase: overlap with the reference positive
        for c in range(nref):
            ov = R[:, c].conj() @ Vc[:, c]
            Vc[:, c] *= np.conj(ov) / abs(ov)
        evals[t] = lam_c
        evecs[t] = Vc
    out = []
    for c, (m, b) in enumerate(refs):
        dl = evals[:, c] - e_n
        coef, resid = _fit(h, dl, order) if order else (np.zeros(0), dl)
        diag = {"fit_residual": float(np.abs(resid).max()), "h_grid": h.tolist()}
        if check_fit and order:
            coef2, _ = _fit(h, dl, order + 1)
            nxt = float(np.abs(coef2[-1]) * h.max() ** ((order + 1) / 2))
            diag["next_order"] = nxt
            floor = 1e-10 * max(1.0, abs(e_n))
            if diag["fit_residual"] > 10 * nxt + floor:
                raise FitDiagnostics(f"fit residual {diag['fit_residual']:.3e} exceeds 10x next order {nxt:.3e}")
        # modes: fit coefficient vectors in powers of sqrt(h), constant term included
        s = np.sqrt(h)
        A = np.stack([s**i for i in range(order + 1)], axis=1)
        vc, *_ = np.linalg.lstsq(A, evecs[:, :, c], rcond=None)
        modes = [from_galerkin_vector(vc[i], omega) for i in range(order + 1)]
        lambdas = [e_n] + [float(x) for x in coef]
        out.append(WkbExpansion(m, b, omega, mu1, mu2, lambdas, modes, diag))
    return tuple(out)


def galerkin_levels(T, h, count, N=64):
    """The ``count`` smallest eigenvalues of the Galerkin matrix of sum_j h^{j/2} T_j."""
    Ts, omega, *_ = _series(T)
    G = galerkin_matrix(Ts, omega, N, h)
    return np.linalg.eigvalsh(0.5 * (G + G.conj().T))[:count]


# periodization
def periodize(expansion: WkbExpansion, xi0, h, grid=4096, x0=0.0, K=None):
    """Sample u(x) = h^{-1/4} sum_k e^{i xi0 (x-k)/h} v((x - x0 - k)/sqrt(h)) on the circle.

    Returns (x, u, norm) with x uniform on [x0 - 1/2, x0 + 1/2) and u of shape
    (grid, 2).
    """
    v = expansion.quasimode(h)
    if K is None:
        # Gaussian exp(-omega y^2/2) below 1e-16 once omega y^2 > 75
        K = int(math.ceil(math.sqrt(75.0 * h / v.omega))) + 1
    x = x0 - 0.5 + np.arange(grid) / grid
    u = np.zeros((grid, v.dim), dtype=complex)
    for k in range(-K, K + 1):
        d = x - x0 - k
        u += np.exp(1j * xi0 * (x - k) / h)[:, None] * v(d / math.sqrt(h))
    u *= h ** -0.25
    norm = math.sqrt(float(np.sum(np.abs(u) ** 2)) / grid)
    return x, u, norm


def mass_outside(x, u, x0, radius):
    """Fraction of sum |u|^2 at points with circle distance > radius from x0."""
    dens = np.sum(np.abs(u) ** 2, axis=1)
    d = np.abs((x - x0 + 0.5) % 1.0 - 0.5)
    return float(dens[d > radius].sum() / dens.sum())
