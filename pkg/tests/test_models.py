import math

import numpy as np
import pytest

from moirewkb.models import (ANTICHIRAL_U, ModelParams, antichiral_diag, antichiral_minima,
                             chiral_harper_squared, chiral_lowenergy_squared, commensurable_unfold,
                             count_closed_curves, dual_harper_symbol, find_wells, harper_chiral_block,
                             harper_chiral_form, harper_h, harper_normal_form, harper_symbol,
                             lowenergy_chiral_block, lowenergy_normal_form, lowenergy_symbol)
from moirewkb.spectra import circle_quantize, tight_binding_bloch
from moirewkb.symbols import eval_symbol, is_hermitian

rng = np.random.default_rng(1)
PTS = rng.uniform(-1, 1, size=(2, 40))


@pytest.mark.parametrize("params", [ModelParams(0.0, 1.0), ModelParams(0.7, 0.4, 0.5), ModelParams(1.0, 0.0, 0.2)])
def test_symbols_are_hermitian(params):
    assert is_hermitian(harper_symbol(params))
    assert is_hermitian(lowenergy_symbol(params))
    assert is_hermitian(dual_harper_symbol(params, 0.3))


def test_harper_symbol_chiral_spectrum_is_symmetric():
    M = eval_symbol(harper_symbol(ModelParams(0.0, 1.3, 0.5)), *PTS, 0.0)
    w = np.linalg.eigvalsh(M)
    assert np.abs(w + w[:, ::-1]).max() < 1e-12


def test_chiral_form_is_unitarily_equivalent():
    pr = ModelParams(0.0, 0.8, 0.5)
    a = np.linalg.eigvalsh(eval_symbol(harper_symbol(pr), *PTS, 0.0))
    b = np.linalg.eigvalsh(eval_symbol(harper_chiral_form(pr), *PTS, 0.0))
    assert np.abs(a - b).max() < 1e-12


def test_squared_symbol_is_block_diagonal_and_matches_matrix_square():
    pr = ModelParams(0.0, 1.0)
    h = harper_h(20)
    S2 = chiral_harper_squared(pr)
    N = 40
    Q = circle_quantize(harper_chiral_form(pr), h, N).matrix
    Q2 = circle_quantize(S2, h, N).matrix
    n = 2 * N + 1
    inner = np.r_[[np.arange(c * n + 8, (c + 1) * n - 8) for c in range(4)]].ravel()
    assert np.abs((Q @ Q)[np.ix_(inner, inner)] - Q2[np.ix_(inner, inner)]).max() < 1e-11
    off = eval_symbol(S2, *PTS, h)[:, :2, 2:]
    assert np.abs(off).max() < 1e-12


def test_antichiral_conjugation_diagonalizes():
    for kp in (0.0, 0.5):
        pr = ModelParams(0.9, 0.0, kp)
        M = eval_symbol(harper_symbol(pr), *PTS, 0.0)
        D = ANTICHIRAL_U @ M @ ANTICHIRAL_U.T
        diag = np.stack([eval_symbol(s, *PTS, 0.0)[:, 0, 0] for s in antichiral_diag(pr)], axis=1)
        assert np.abs(D - np.einsum("ij,jk->ijk", diag, np.eye(4))).max() < 1e-12


def test_antichiral_minima_are_global():
    w0 = 0.7
    xs, xis = np.meshgrid(np.linspace(0, 1, 201), np.linspace(0, 1, 201))
    for S, (c, x0, xi0) in zip(antichiral_diag(ModelParams(w0, 0.0)), antichiral_minima(w0)):
        vals = eval_symbol(S, xs, xis, 0.0)[..., 0, 0].real
        assert vals.min() >= c - 1e-12
        assert eval_symbol(S, x0, xi0, 0.0)[0, 0].real == pytest.approx(c, abs=1e-12)
    assert [c for c, *_ in antichiral_minima(0.7)] == pytest.approx([-5.1, -3.7, -3.1, -1.7])


def test_antichiral_needs_half_integer_k_perp():
    with pytest.raises(ValueError):
        antichiral_diag(ModelParams(1.0, 0.0, 0.3))


def test_harper_wells():
    S = chiral_harper_squared(ModelParams(0.0, 1.0)).block([0, 1])
    res = find_wells(S, model="harper")
    found = sorted(round(w.xi0, 9) for w in res.wells)
    assert found == pytest.approx([-1 / 3, 1 / 3], abs=1e-9)
    for w in res.wells:
        assert w.x0 == pytest.approx(0.0, abs=1e-9)
        assert w.scale == pytest.approx(12 * math.pi**2, rel=1e-9)
        assert w.omega == pytest.approx(1.0, abs=1e-9)


def test_harper_wells_half_k_perp():
    S = chiral_harper_squared(ModelParams(0.0, 1.0, 0.5)).block([0, 1])
    found = sorted(w.xi0 for w in find_wells(S).wells)
    assert found == pytest.approx([-1 / 6, 1 / 6], abs=1e-9)


def test_lowenergy_well():
    S = chiral_lowenergy_squared(ModelParams(0.0, 1.0)).block([0, 1])
    wells = find_wells(S, xi_range=(-0.5, 0.5)).wells
    assert len(wells) == 1
    assert (wells[0].x0, wells[0].xi0) == pytest.approx((0.0, 0.0), abs=1e-9)


@pytest.mark.parametrize("w1,count", [(0.4, 2), (1.0, 1), (2.0, 2)])
def test_harper_zero_set_curve_counts(w1, count):
    assert count_closed_curves(harper_chiral_block(ModelParams(0.0, w1))) == count


@pytest.mark.parametrize("w1", [0.4, 1.0])
def test_lowenergy_zero_set_is_one_curve(w1):
    D = lowenergy_chiral_block(ModelParams(0.0, w1))
    assert count_closed_curves(D, xi_range=(-3.0, 3.0)) == 1


def test_normal_form_coefficients():
    for w1 in (0.4, 2.0):
        nf = harper_normal_form(ModelParams(0.0, w1), -1, order=0)
        assert (nf.omega, nf.mu1, nf.mu2) == pytest.approx((w1, -w1, w1), abs=1e-10)
        le = lowenergy_normal_form(ModelParams(0.0, w1), order=0)
        om = 2 * math.pi * math.sqrt(3) * w1
        assert (le.omega, le.mu1, le.mu2) == pytest.approx((om, -om, om), rel=1e-10)


def test_dual_symbol_quantizes_to_tight_binding():
    # the dual symbol on the circle at h = 1/(2 pi L) is the chain with sites offset by n/L
    pr = ModelParams(0.3, 0.8, 0.5)
    L = 7
    h = harper_h(L)
    N = 3  # 7 modes: one full period of the chain
    A = circle_quantize(dual_harper_symbol(pr), h, N, k_min=1).matrix
    B = tight_binding_bloch(L, 1, 0.0, pr).matrix
    wa, wb = np.linalg.eigvalsh(A), np.linalg.eigvalsh(B)
    # open versus periodic chain: compare the on-site blocks only
    n = 2 * N + 1
    onsite_a = np.array([A[np.ix_(range(i, 4 * n, n), range(i, 4 * n, n))] for i in range(n)])
    onsite_b = np.array([B[np.ix_(range(i, 4 * n, n), range(i, 4 * n, n))] for i in range(n)])
    assert np.abs(onsite_a - onsite_b).max() < 1e-12
    assert wa.shape == wb.shape


def test_unfolding_rejects_unreduced_fraction():
    with pytest.raises(ValueError):
        commensurable_unfold(2, 4, ModelParams())
