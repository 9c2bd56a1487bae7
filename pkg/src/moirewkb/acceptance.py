"""
Acceptance suite: ten numbered criteria, each a list of measured checks.

Every check carries the measured value, its bound and the direction of the
comparison, so reports stay machine readable.  The suite is shared by the
``verify`` command and the test-suite.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import bohr_sommerfeld as bs
from .models import (ModelParams, antichiral_diag, antichiral_minima, chiral_harper_squared,
                     commensurable_unfold, dual_harper_symbol, harper_h, harper_normal_form,
                     harper_symbol, lowenergy_normal_form, lowenergy_symbol)
from .symbols import (NormalForm, PhaseSpaceSymbol, commutator, cos_sym, eval_symbol,
                      pointwise_product, sin_sym, symmetric_anticommutator)
from .spectra import (band_sweep, circle_quantize, cutoff_matrix, flatness, hausdorff, hermitian_eigensolve,
                      lowenergy_bloch, tight_binding_bloch, well_eigenvalues)
from .hermite import galerkin_matrix
from .wkb import (DEFAULT_H_GRID, galerkin_levels, harmonic_levels, mass_outside, periodize,
                  residual_order, wkb_recurrence)


@dataclass
class Check:
    label: str
    measured: float
    bound: float
    relation: str = "<="  # measured <relation> bound
    detail: dict = field(default_factory=dict)

    @property
    def passed(self):
        m = self.measured
        if m is None or (isinstance(m, float) and math.isnan(m)):
            return False
        return m <= self.bound if self.relation == "<=" else m >= self.bound

    def line(self):
        return (f"{'PASS' if self.passed else 'FAIL'}  {self.label}: "
                f"{self.measured:.4g} {self.relation} {self.bound:.4g}")

    def to_dict(self):
        return {**asdict(self), "passed": self.passed}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list
    seconds: float
    budget: float

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def line(self):
        bad = [c.label for c in self.checks if not c.passed]
        tail = "" if not bad else "  failing: " + "; ".join(bad)
        return (f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.title} "
                f"({self.seconds:.1f}s of {self.budget:.0f}s){tail}")

    def to_dict(self):
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "seconds": self.seconds, "budget": self.budget,
                "checks": [c.to_dict() for c in self.checks]}


def _slope(h, err):
    h, err = np.asarray(h, float), np.asarray(err, float)
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


# 1: exact Moyal products of trigonometric symbols
def criterion_1(w1=1.0, points=100, seed=0, h_max=0.05):
    """Products are exact in h.  They are compared with the closed forms, and
    their expansions to h^9 with the partial sums of the closed forms."""
    rng = np.random.default_rng(seed)
    x, xi = rng.uniform(size=(2, points))
    hs = rng.uniform(0.0, h_max, size=points)
    one = PhaseSpaceSymbol.constant([[1.0]])
    g = sin_sym("x").scale(math.sqrt(3) * w1)
    f = (one - cos_sym("x")).scale(w1)
    ups = one + cos_sym("xi").scale(2.0)
    comm = commutator(g.scale(1j), ups)
    anti = symmetric_anticommutator(ups, f) - pointwise_product(ups, f).scale(2.0)

    def series(h, odd):
        a = 2 * math.pi**2 * h
        if odd:
            return sum((-1) ** n * a ** (2 * n + 1) / math.factorial(2 * n + 1) for n in range(5))
        return sum((-1) ** n * a ** (2 * n) / math.factorial(2 * n) for n in range(1, 5))

    def ev(S):
        return np.array([eval_symbol(S, x[i], xi[i], hs[i])[0, 0] for i in range(points)])

    base_c = 4 * math.sqrt(3) * w1 * np.cos(2 * np.pi * x) * np.sin(2 * np.pi * xi)
    base_a = -4 * w1 * np.cos(2 * np.pi * x) * np.cos(2 * np.pi * xi)
    checks = []
    for label, S, ref in [
        ("commutator vs sin(2 pi^2 h)", comm, base_c * np.sin(2 * np.pi**2 * hs)),
        ("commutator to h^9 vs series to h^9", comm.to_h_series(18),
         base_c * np.array([series(h, True) for h in hs])),
        ("anticommutator correction vs cos(2 pi^2 h) - 1", anti, base_a * (np.cos(2 * np.pi**2 * hs) - 1)),
        ("anticommutator correction to h^9 vs series to h^9", anti.to_h_series(18),
         base_a * np.array([series(h, False) for h in hs])),
    ]:
        val = ev(S)
        rel = float(np.abs(val - ref).max() / np.abs(ref).max())
        checks.append(Check(label + " (relative)", rel, 1e-10))
    return checks


# 2: normal-form coefficients at the wells
def criterion_2():
    checks = []
    worst = 0.0
    for w1 in (0.4, 1.0, 2.0):
        for kp in (0.0, 0.5):
            for sign in (1, -1):
                nf = harper_normal_form(ModelParams(0.0, w1, kp), sign, order=0)
                xi0 = sign * (1 / 3) * 0.5 ** round(2 * kp)
                mu1 = sign * (-1) ** round(2 * kp) * w1
                worst = max(worst, abs(nf.omega - w1), abs(nf.mu1 - mu1), abs(nf.mu2 + mu1),
                            abs(nf.xi0 - xi0), abs(nf.x0))
    checks.append(Check("Harper normal form (omega, mu1, mu2, well) max error", worst, 1e-9))
    worst = 0.0
    for w1 in (0.4, 1.0, 2.0):
        nf = lowenergy_normal_form(ModelParams(0.0, w1), order=0)
        om = 2 * math.pi * math.sqrt(3) * w1
        worst = max(worst, abs(nf.omega - om), abs(nf.mu1 + om), abs(nf.mu2 - om))
    checks.append(Check("low-energy normal form (omega, mu1, mu2) max error", worst, 1e-9))
    return checks


# 3 and 4: square-root eigenvalue laws
def _sorted_match(ev, targets, mult):
    want = []
    lev = []
    for m, t in enumerate(targets):
        want += [t] * mult(m)
        lev += [m] * mult(m)
    ev = np.sort(ev)[:len(want)]
    if len(ev) < len(want):
        return None
    d = np.abs(ev - np.array(want))
    lev = np.array(lev)
    return np.array([d[lev == m].max() for m in range(len(targets))])


def _law_checks(name, hs, errors, min_exponent=0.9):
    E = np.array(errors)
    hs = np.array(hs)
    worst = E.max(axis=1)
    C = float((worst / hs).max())
    per_level = [_slope(hs, E[:, m]) for m in range(E.shape[1])]
    return [Check(f"{name} error exponent (worst level)", _slope(hs, worst), min_exponent, ">=",
                  {"C": C, "errors": E.tolist(), "per_level_exponents": per_level, "h": hs.tolist()})]


def criterion_3(levels=6):
    om = 2 * math.pi * math.sqrt(3)
    hs = [1 / 60, 1 / 120, 1 / 240]
    errs = []
    for h in hs:
        N = max(128, int(1.2 / h))
        pred = [math.sqrt(2 * n * om * h) for n in range(levels)]
        ev = well_eigenvalues(lowenergy_bloch(0.0, h, N, ModelParams(0.0, 1.0)), -1e-12, 1.5 * pred[-1])
        e = _sorted_match(ev, pred, lambda m: 1 if m == 0 else 2)
        if e is None:
            return [Check("low-energy: enough localized eigenvalues", len(ev), 2 * levels - 1, ">=")]
        errs.append(e)
    return _law_checks("low-energy sqrt(2 n omega h)", hs, errs)


def criterion_4(levels=6):
    c = 12 * math.pi**2
    Ls = [60, 120, 240]
    hs = [harper_h(L) for L in Ls]
    errs = []
    split = float("nan")
    pairs = []
    for L, h in zip(Ls, hs):
        N = L // 2
        pred = [math.sqrt(2 * n * c * h) for n in range(levels)]
        M = circle_quantize(harper_symbol(ModelParams(0.0, 1.0)), h, N, k_min=0)
        ev = well_eigenvalues(M, -1e-12, 1.5 * pred[-1])
        e = _sorted_match(ev, pred, lambda m: 2 if m == 0 else 4)
        if e is None:
            return [Check("Harper: enough localized eigenvalues", len(ev), 4 * levels - 2, ">=")]
        errs.append(e)
        if L == Ls[-1]:
            s = np.sort(ev)[:4 * levels - 2]
            pairs = (s[1::2] - s[0::2]).tolist()
            split = float(max(pairs))
    return _law_checks("Harper sqrt(2 n 12 pi^2 h)", hs, errs) + [
        Check("Harper near-degenerate pair splitting at L=240", split, 1e-6, "<=", {"per_pair": pairs})]


# 5: almost flat bands
def _nearest_positive(bsr, count=2):
    m = bsr.bands.mean(axis=0)
    idx = [i for i in np.argsort(m) if m[i] >= -1e-9]
    return idx[:count]


def worst_flatness(bsr, h):
    return max(flatness(bsr, i, h)[1] for i in _nearest_positive(bsr))


def lowenergy_flatness(h, params, nk=17, N=None):
    N = N or max(48, int(1.5 / h))
    ks = np.linspace(0.0, 2 * math.pi * h, nk)
    return worst_flatness(band_sweep(lambda k: lowenergy_bloch(k, h, N, params), ks, around_zero=8), h)


def discrete_flatness(L, params, nk=33):
    ks = np.linspace(0.0, 2 * math.pi, nk)
    return worst_flatness(band_sweep(lambda k: tight_binding_bloch(L, 1, k, params), ks), harper_h(L))


def criterion_5():
    chiral, anti = ModelParams(0.0, 1.0), ModelParams(1.0, 0.0)
    c_le, a_le = lowenergy_flatness(1 / 60, chiral), lowenergy_flatness(1 / 60, anti)
    c_tb, a_tb = discrete_flatness(30, chiral), discrete_flatness(30, anti)
    seq = [lowenergy_flatness(h, chiral) for h in (1 / 20, 1 / 40, 1 / 80)]
    steps = float(max(b - a for a, b in zip(seq, seq[1:])))
    return [
        Check("low-energy h=1/60: chiral/anti-chiral flatness ratio", c_le / a_le, 0.1, "<=",
              {"chiral": c_le, "antichiral": a_le}),
        Check("discrete L=30: chiral/anti-chiral flatness ratio", c_tb / a_tb, 0.1, "<=",
              {"chiral": c_tb, "antichiral": a_tb}),
        Check("low-energy flatness over h=1/20,1/40,1/80: largest step (negative = decreasing)",
              steps, 0.0, "<=", {"flatness": seq}),
    ]


# 6: residual order of the assembled quasimode
def criterion_6():
    nf = harper_normal_form(ModelParams(0.0, 1.0), +1, order=8)
    checks = []
    odd = 0.0
    for ell in (0, 1, 2):
        ex = wkb_recurrence(nf, 0, 2, ell)
        K = 2 * ell + 2
        sub = NormalForm(nf.T[:K + 1], nf.omega, nf.mu1, nf.mu2, nf.x0, nf.xi0)
        slope = residual_order(ex, sub, DEFAULT_H_GRID)
        checks.append(Check(f"residual slope at ell={ell}", slope, ell + 1.45, ">=",
                            {"lambdas": [float(v) for v in ex.lambdas]}))
        odd = max(odd, max((abs(v) for v in ex.lambdas[1::2]), default=0.0))
    checks.append(Check("largest odd-index lambda", odd, 0.0))
    return checks


# 7: stability of the rescaled spectrum
def criterion_7(count=6):
    hs = np.array(DEFAULT_H_GRID)
    checks = []
    for name, nf in (("Harper", harper_normal_form(ModelParams(0.0, 1.0), +1, order=6)),
                     ("low-energy", lowenergy_normal_form(ModelParams(0.0, 1.0), order=4))):
        e = np.array([v for v, *_ in harmonic_levels(nf.omega, nf.mu1, nf.mu2, count)][:count])
        D = np.array([np.abs(galerkin_levels(nf, h, count) - e) for h in hs])
        rates = [_slope(hs, D[:, i]) for i in range(count)]
        checks.append(Check(f"{name}: slowest rate among {count} levels", min(rates), 0.45, ">=",
                            {"rates": rates}))
    return checks


# 8: periodized quasimode
def criterion_8():
    nf = lowenergy_normal_form(ModelParams(0.0, 1.0), order=4)
    ex = wkb_recurrence(nf, 0, 1, 1)
    hs = np.array([1 / 50, 1 / 100, 1 / 200, 1 / 400, 1 / 800, 1 / 1600])
    dev = [abs(periodize(ex, 0.0, h, grid=8192)[2] - 1) for h in hs]
    x, u, _ = periodize(ex, 0.0, 1 / 400, grid=8192)
    return [Check("norm defect exponent", _slope(hs, dev), 0.45, ">=", {"defects": dev}),
            Check("mass outside h^0.4 window at h=1/400", mass_outside(x, u, 0.0, (1 / 400) ** 0.4), 1e-6)]


# 9: anti-chiral ladders and the harmonic Bohr-Sommerfeld case
def antichiral_errors(w0, spacing, Ls=(40, 80, 160), levels=4, k_perp=0.0):
    pr = ModelParams(w0, 0.0, k_perp)
    ents = antichiral_diag(pr)
    mins = antichiral_minima(w0, k_perp)
    out = []
    for L in Ls:
        h = harper_h(L)
        N = L // 2
        worst = 0.0
        for j, (S, (c, x0, xi0)) in enumerate(zip(ents, mins), start=1):
            k_min = int(round(xi0 / (2 * math.pi * h))) - N
            ev = np.linalg.eigvalsh(circle_quantize(S, h, N, k_min).matrix)[:levels]
            pred = [bs.antichiral_levels(w0, h, j, k, spacing) for k in range(levels)]
            worst = max(worst, float(np.abs(ev - pred).max()))
        out.append(worst)
    return [harper_h(L) for L in Ls], out


def criterion_9():
    checks = []
    for w0 in (0.7, 1.0):
        hs, err = antichiral_errors(w0, "stated")
        checks.append(Check(f"w0={w0}: ladder spacing 8 pi^2 w0, error exponent", _slope(hs, err), 1.8, ">=",
                            {"errors": err, "C": float(max(e / h**2 for e, h in zip(err, hs)))}))
    hs, err = antichiral_errors(0.7, "harmonic")
    checks.append(Check("w0=0.7: ladder spacing 8 pi^2 sqrt(w0) (diagnostic), error exponent", _slope(hs, err),
                        1.8, ">=", {"errors": err}))
    # c_j: formula, attained minimum and exact diagonalization by the constant conjugation
    worst = 0.0
    for w0 in (0.7, 1.0):
        pr = ModelParams(w0, 0.0)
        for S, (c, x0, xi0), cj in zip(antichiral_diag(pr), antichiral_minima(w0), bs.ANTICHIRAL_C(w0)):
            worst = max(worst, abs(c - cj), abs(eval_symbol(S, x0, xi0, 0.0)[0, 0].real - cj))
    target = max(abs(a - b) for a, b in zip(bs.ANTICHIRAL_C(0.7), (-5.1, -3.7, -3.1, -1.7)))
    checks.append(Check("c_j formula, values at 0.7 and attained minima", max(worst, target), 1e-12))
    F = bs.F_series(bs.harmonic_series(1.7), 0.3)
    dev = max(abs(F[0] - 0.3 / 1.7), abs(F[1] - 0.5), abs(F[2]))
    checks.append(Check("harmonic Bohr-Sommerfeld (F0, F1, F2) vs (tau/lambda, 1/2, 0)", dev, 1e-8))
    return checks


# 10: structural invariants
def _chiral_defect(M):
    w = np.linalg.eigvalsh(M)
    return float(np.abs(w + w[::-1]).max())


def bloch_union(L, nk=257, N=200, symbol="harper"):
    """Circle spectrum vs the union over k_x of the tight-binding Bloch spectra."""
    pr = ModelParams(0.0, 1.0)
    h = harper_h(L)
    S = harper_symbol(pr) if symbol == "harper" else dual_harper_symbol(pr)
    w, V = hermitian_eigensolve(circle_quantize(S, h, N))
    tb = np.concatenate([np.linalg.eigvalsh(tight_binding_bloch(L, 1, k, pr).matrix)
                         for k in np.linspace(0, 2 * math.pi, nk)])
    n = 2 * N + 1
    P = (np.abs(V) ** 2).reshape(4, n, -1).sum(axis=0)
    edge = P[: n // 10].sum(axis=0) + P[-(n // 10):].sum(axis=0)
    return w, tb, edge


def unfolding_defect(p, q, params, hp=0.004, N=60):
    ev = np.linalg.eigvalsh(circle_quantize(commensurable_unfold(p, q, params), hp, N).matrix)
    hd = hp - p / (2 * math.pi * q)
    ref = np.sort(np.concatenate([np.linalg.eigvalsh(circle_quantize(dual_harper_symbol(params, s / q), hd, N).matrix)
                                  for s in range(q)]))
    return float(np.abs(ref - ev).max())


def criterion_10():
    checks = []
    chiral = ModelParams(0.0, 1.0)
    h30 = harper_h(30)
    mats = {
        "circle Harper": circle_quantize(harper_symbol(chiral), h30, 40).matrix,
        "circle Harper k_perp=1/2": circle_quantize(harper_symbol(ModelParams(0.0, 0.7, 0.5)), h30, 40).matrix,
        "low-energy Bloch": lowenergy_bloch(0.3 / 60, 1 / 60, 64, chiral).matrix,
        "tight-binding": tight_binding_bloch(30, 1, 0.7, chiral).matrix,
        "tight-binding L=7/2": tight_binding_bloch(7, 2, 0.3, chiral).matrix,
    }
    sym = max(_chiral_defect(M) for M in mats.values())
    checks.append(Check("chiral spectral symmetry, max |e_i + e_(n-1-i)|", sym, 1e-10))
    general = ModelParams(0.7, 0.4, 0.25)
    mats.update({
        "general Harper": circle_quantize(harper_symbol(general), h30, 40).matrix,
        "dual Harper": circle_quantize(dual_harper_symbol(general, 0.1), h30, 40).matrix,
        "general low-energy": lowenergy_bloch(0.01, 1 / 60, 64, general).matrix,
        "unfolded 2/3": circle_quantize(commensurable_unfold(2, 3, general), 0.004, 30).matrix,
        "chiral square": circle_quantize(chiral_harper_squared(chiral), h30, 40).matrix,
        "low-energy symbol": circle_quantize(lowenergy_symbol(general), 1 / 60, 40).matrix,
        "cutoff": cutoff_matrix(h30, 40, 0.0, 1 / 3, 0.3, 0.3, 2, k_min=0),
        "Galerkin": galerkin_matrix(harper_normal_form(chiral, 1, order=4), 1.0, 30, 0.01),
    })
    herm = max(float(np.abs(M - M.conj().T).max()) for M in mats.values())
    checks.append(Check("Hermiticity defect over built matrices", herm, 1e-12))
    wrong = 0.0
    for nf in (harper_normal_form(chiral, 1, order=6), harper_normal_form(ModelParams(0.0, 2.0, 0.5), -1, order=6),
               lowenergy_normal_form(chiral, order=6)):
        for j, T in enumerate(nf.T):
            for *_, key, v in T.terms():
                if (key[0] + key[1]) % 2 != j % 2:
                    wrong = max(wrong, abs(v))
    checks.append(Check("parity: largest coefficient in a forbidden slot", wrong, 0.0))
    w, tb, edge = bloch_union(30)
    d = hausdorff(w, tb)
    checks.append(Check("Bloch union at L=30, Hausdorff distance", d[0], 5e-3, "<=",
                        {"circle_to_union": d[1], "union_to_circle": d[2]}))
    wd, tbd, edge_d = bloch_union(30, symbol="dual")
    bulk = wd[edge_d < 0.5]
    checks.append(Check("Bloch union at L=30, dual symbol bulk spectrum (diagnostic)",
                        hausdorff(bulk, tbd)[1], 5e-3, "<=", {"bulk_states": int(bulk.size)}))
    checks.append(Check("unfolding q=2 eigenvalue match",
                        max(unfolding_defect(1, 2, chiral), unfolding_defect(1, 2, general)), 1e-6))
    return checks


CRITERIA = {
    1: ("exact Moyal products of trigonometric symbols", criterion_1, 1),
    2: ("normal-form coefficients at the wells", criterion_2, 5),
    3: ("low-energy chiral square-root eigenvalue law", criterion_3, 60),
    4: ("Harper chiral square-root eigenvalue law", criterion_4, 120),
    5: ("almost flat bands in the chiral limit", criterion_5, 60),
    6: ("residual order of the assembled quasimode", criterion_6, 30),
    7: ("stability of the rescaled Galerkin spectrum", criterion_7, 30),
    8: ("periodized quasimode norm and localization", criterion_8, 10),
    9: ("anti-chiral ladders and harmonic Bohr-Sommerfeld", criterion_9, 60),
    10: ("structural invariants", criterion_10, 120),
}


def run(numbers=None):
    out = []
    for n in numbers or sorted(CRITERIA):
        title, fn, budget = CRITERIA[n]
        t = time.perf_counter()
        checks = fn()
        out.append(CriterionResult(n, title, checks, time.perf_counter() - t, budget))
    return out
