import math

import numpy as np
import pytest

from moirewkb.models import ModelParams, harper_normal_form, lowenergy_normal_form
from moirewkb.symbols import NormalForm, PhaseSpaceSymbol, harmonic_normal_form
from moirewkb.wkb import (ResonantObstruction, classify_resonance, galerkin_levels, mass_outside,
                          periodize, resonant_expansion, residual_order, wkb_recurrence)


def sym2(entries):
    """2x2 polynomial symbol from {(i, j): {(a, b): c}}."""
    return PhaseSpaceSymbol(2, {0: {ij: {(a, b, 0, 0, 0): c for (a, b), c in e.items()}
                                    for ij, e in entries.items()}})


def generic_form():
    # omega = 1, mu = (0, 0.7): non-resonant; odd T1, even T2
    T1 = sym2({(0, 0): {(3, 0): 0.3}, (0, 1): {(1, 0): 0.2}, (1, 0): {(1, 0): 0.2}})
    T2 = sym2({(0, 0): {(4, 0): 0.1, (2, 2): 0.05}, (1, 1): {(2, 0): -0.2}, (0, 1): {(0, 2): 0.1},
               (1, 0): {(0, 2): 0.1}})
    zero = PhaseSpaceSymbol.zero(2)
    return harmonic_normal_form(1.0, 0.0, 0.7, extra=[T1, T2, zero, zero])


def test_classify_resonance():
    assert classify_resonance(1.0, -1.0, 1.0).resonant
    assert classify_resonance(-1.0, 1.0, 1.0).witness == -1
    assert not classify_resonance(0.0, 0.7, 1.0).resonant
    om = 2 * math.pi * math.sqrt(3)
    assert classify_resonance(-om, om, om).resonant
    with pytest.raises(ValueError):
        classify_resonance(0, 0, 0)


def test_harmonic_quasimode_is_exact():
    nf = harmonic_normal_form(1.3, -0.4, 0.9, extra=[PhaseSpaceSymbol.zero(2)] * 4)
    ex = wkb_recurrence(nf, 2, 2, 2)
    assert ex.lambdas[0] == pytest.approx(5 * 1.3 + 0.9)
    assert all(v == 0 for v in ex.lambdas[1:])
    assert math.isnan(residual_order(ex, nf))


@pytest.mark.parametrize("n,branch", [(0, 1), (1, 1), (0, 2)])
def test_expansion_tracks_galerkin_eigenvalue(n, branch):
    nf = generic_form()
    ex = wkb_recurrence(nf, n, branch, 2)
    assert all(v == 0 for v in ex.lambdas[1::2])
    errs = []
    hs = [1e-2, 2.5e-3]
    for h in hs:
        ev = galerkin_levels(nf, h, 8, N=80)
        target = sum(l * h ** (i / 2) for i, l in enumerate(ex.lambdas))
        errs.append(np.abs(ev - target).min())
    # error of order h^{5/2} or better
    assert errs[1] < errs[0] * 4 ** -2.3 + 1e-12


def test_residual_order_grows_with_ell():
    nf = generic_form()
    slopes = [residual_order(wkb_recurrence(nf, 0, 1, ell), NormalForm(nf.T[:2 * ell + 3], 1.0, 0.0, 0.7))
              for ell in (0, 1)]
    assert slopes[0] > 1.4 and slopes[1] > 2.4


def test_resonant_obstruction_is_reported():
    T1 = sym2({(0, 1): {(1, 0): 0.5}, (1, 0): {(1, 0): 0.5}})
    nf = harmonic_normal_form(1.0, 1.0, -1.0, extra=[T1, PhaseSpaceSymbol.zero(2)])
    with pytest.raises(ResonantObstruction) as info:
        wkb_recurrence(nf, 0, 1, 1)
    assert info.value.step == 1


def test_resonant_route_matches_galerkin():
    T1 = sym2({(0, 1): {(1, 0): 0.5}, (1, 0): {(1, 0): 0.5}})
    T2 = sym2({(0, 0): {(2, 0): 0.1}, (1, 1): {(0, 2): 0.1}})
    nf = harmonic_normal_form(1.0, 1.0, -1.0, extra=[T1, T2])
    # e_2 = 2 is double: level 0 of branch 1 and level 1 of branch 2
    exps = resonant_expansion(nf, 2, 1)
    assert len(exps) == 2
    h = 1e-3
    ev = galerkin_levels(nf, h, 4)
    for ex in exps:
        assert np.abs(ev - sum(l * h ** (i / 2) for i, l in enumerate(ex.lambdas))).min() < 1e-4


def test_model_normal_forms_are_resonant():
    for nf in (harper_normal_form(ModelParams(0.0, 1.0), +1, 0), lowenergy_normal_form(ModelParams(0.0, 1.0), 0)):
        assert classify_resonance(nf.mu1, nf.mu2, nf.omega).resonant


def test_periodized_mode_is_normalized_and_localized():
    nf = lowenergy_normal_form(ModelParams(0.0, 1.0), order=2)
    ex = wkb_recurrence(nf, 0, 1, 1)
    x, u, norm = periodize(ex, 0.0, 1 / 400, grid=8192)
    assert abs(norm - 1) < 0.05
    assert mass_outside(x, u, 0.0, (1 / 400) ** 0.4) < 1e-6
