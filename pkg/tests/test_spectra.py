import math
import xml.dom.minidom

import numpy as np
import pytest

from moirewkb.models import ModelParams, harper_h, harper_symbol
from moirewkb.spectra import (EigensolverError, OperatorMatrix, band_sweep, bands_svg, circle_quantize,
                              cutoff_matrix, first_positive_band, flat_bump, flatness, hausdorff,
                              hermitian_eigensolve, localized_states, lowenergy_bloch, massive_operator,
                              smooth_step, tight_binding_bloch, well_eigenvalues)
from moirewkb.symbols import WellCandidate, cos_sym, fourier, monomial


def test_xi_symbol_quantizes_to_a_diagonal():
    h, N = 0.01, 5
    M = circle_quantize(cos_sym("xi") + monomial(0, 2), h, N).matrix
    k = np.arange(-N, N + 1)
    xi = 2 * math.pi * h * k
    assert np.allclose(M, np.diag(np.cos(2 * math.pi * xi) + xi**2))


def test_x_phase_shifts_modes():
    M = circle_quantize(fourier({2: 1.0}, "x"), 0.1, 4).matrix
    assert np.allclose(M, np.eye(9, k=-2))


def test_x_powers_are_rejected():
    with pytest.raises(ValueError):
        circle_quantize(monomial(1, 0), 0.1, 3)


def test_quantized_harper_symbol_is_hermitian():
    M = circle_quantize(harper_symbol(ModelParams(0.4, 0.9, 0.5)), harper_h(12), 20)
    assert M.hermiticity_defect() < 1e-13
    assert M.provenance["dim"] == 4


def test_eigensolver_rejects_non_hermitian():
    with pytest.raises(EigensolverError):
        hermitian_eigensolve(np.array([[0, 1], [0, 0]], dtype=complex))


@pytest.mark.parametrize("p,q", [(3, 1), (5, 2)])
def test_tight_binding_bloch_shape_and_hermiticity(p, q):
    M = tight_binding_bloch(p, q, 0.37, ModelParams(0.2, 1.0, 0.5))
    assert M.size == 4 * p
    assert M.hermiticity_defect() < 1e-14


def test_tight_binding_free_chain_dispersion():
    # w = 0 and k_perp = 0: bands are eigenvalues of 2 t cos(k) + t0 for each Bloch phase
    from moirewkb.models import hopping_matrices
    t, t0 = hopping_matrices(0.0)
    k = 0.9
    ev = np.linalg.eigvalsh(tight_binding_bloch(1, 1, k, ModelParams(0.0, 0.0)).matrix)
    ref = np.linalg.eigvalsh(t * np.exp(1j * k) + t.conj().T * np.exp(-1j * k) + t0)
    assert np.allclose(ev, ref)


def test_band_sweep_middle_subset_matches_full():
    pr = ModelParams(0.0, 1.0)
    ks = np.linspace(0, 2 * math.pi * (1 / 20), 5)
    full = band_sweep(lambda k: lowenergy_bloch(k, 1 / 20, 30, pr), ks)
    mid = band_sweep(lambda k: lowenergy_bloch(k, 1 / 20, 30, pr), ks, around_zero=4)
    lo = mid.metadata["first_band"]
    assert np.allclose(full.bands[:, lo:lo + 8], mid.bands, atol=1e-10)
    b = first_positive_band(mid)
    assert mid.bands[:, b].min() > -1e-9
    spread, rel = flatness(mid, b, 1 / 20)
    assert spread >= 0 and rel >= 0


def test_band_sweep_rejects_empty_grid():
    with pytest.raises(ValueError):
        band_sweep(lambda k: np.eye(2), [])


def test_lowenergy_chiral_spectrum_is_symmetric():
    w = np.linalg.eigvalsh(lowenergy_bloch(0.1, 1 / 30, 40, ModelParams(0.0, 1.0)).matrix)
    assert np.abs(w + w[::-1]).max() < 1e-10


def test_smooth_cutoffs():
    assert smooth_step(0) == 0 and smooth_step(1) == 1
    assert flat_bump(0.05, 0.1, 0.2) == 1.0 and flat_bump(0.25, 0.1, 0.2) == 0.0
    Q = cutoff_matrix(0.01, 20, 0.0, 0.0, 0.3, 0.3, 2)
    assert np.allclose(Q, Q.conj().T)
    # negative part is a semiclassical error that shrinks with h
    lows = [np.linalg.eigvalsh(cutoff_matrix(h, N, 0.0, 0.0, 0.3, 0.3, 1)).min()
            for h, N in ((0.01, 20), (0.002, 100), (0.0005, 400))]
    assert lows[0] < lows[1] < lows[2] < 0 and lows[2] > -0.02


def test_massive_operator_trivial_cutoffs():
    M = circle_quantize(harper_symbol(ModelParams(0.0, 1.0)), harper_h(10), 8)
    w = WellCandidate(0.0, 1 / 3)
    assert np.allclose(massive_operator(M, w, chi=1).matrix, M.matrix)
    assert np.allclose(massive_operator(M, w, chi=0).matrix, M.matrix + np.eye(M.size))


def test_localized_states_in_a_diagonal_model():
    M = OperatorMatrix(np.diag([0.0, 1.0, 2.0]))
    Q = np.diag([1.0, 0.0, 1.0])
    assert [e for e, _ in localized_states(M, Q)] == [0.0, 2.0]


def test_well_eigenvalues_selects_states_near_the_centre():
    h = 1 / 60
    M = lowenergy_bloch(0.0, h, 80, ModelParams(0.0, 1.0))
    ev = well_eigenvalues(M, -1e-12, 1.0)
    allev = np.linalg.eigvalsh(M.matrix)
    assert ev.size > 0
    assert all(np.abs(allev - e).min() < 1e-10 for e in ev)
    # first excited pair sits near sqrt(2 omega h)
    om = 2 * math.pi * math.sqrt(3)
    assert np.abs(ev - math.sqrt(2 * om * h)).min() < 0.05
    assert well_eigenvalues(M, -1e-12, 1.0, threshold=1.01).size == 0


def test_hausdorff():
    d, ab, ba = hausdorff([0.0, 1.0], [0.1, 1.0, 3.0])
    assert (d, ab, ba) == pytest.approx((2.0, 0.1, 2.0))


def test_svg_is_well_formed():
    pr = ModelParams(0.0, 1.0)
    bs = band_sweep(lambda k: tight_binding_bloch(3, 1, k, pr), np.linspace(0, 1, 4))
    xml.dom.minidom.parseString(bands_svg(bs))


def test_massive_operator_isolates_the_well():
    # oracle: eigenvalues whose eigenvectors keep 99% of their mass under the cutoff
    from moirewkb.models import chiral_harper_squared
    h, N, rad = harper_h(60), 128, 0.3
    M = circle_quantize(chiral_harper_squared(ModelParams(0.0, 1.0)).block([0, 1]), h, N)
    Q = cutoff_matrix(h, N, 0.0, 1 / 3, rad, rad, 2)
    loc = np.array([e for e, _ in localized_states(M, Q, 0.99) if e < 0.5])
    ev = np.linalg.eigvalsh(massive_operator(M, WellCandidate(0.0, 1 / 3), rad, rad).matrix)
    assert loc.size >= 1
    assert np.abs(ev[:loc.size] - np.sort(loc)).max() < 1e-6


def test_bloch_matrix_is_2pi_periodic_in_kx():
    pr = ModelParams(0.4, 0.9, 0.5)
    a = tight_binding_bloch(5, 2, 0.3, pr).matrix
    b = tight_binding_bloch(5, 2, 0.3 + 2 * math.pi, pr).matrix
    assert np.abs(a - b).max() < 1e-12


def test_free_dirac_spectrum():
    h, N, kx, kp = 1 / 30, 10, 0.05, 0.2
    ev = np.linalg.eigvalsh(lowenergy_bloch(kx, h, N, ModelParams(0.0, 0.0, kp)).matrix)
    n = np.arange(-N, N + 1)
    mod = np.abs(2 * math.pi * h * n + kx + 1j * kp)
    assert np.allclose(ev, np.sort(np.concatenate([mod, mod, -mod, -mod])))


def test_lowenergy_bands_nearly_independent_of_kx():
    h, N = 1 / 60, 128
    pr = ModelParams(0.0, 1.0)
    a = np.linalg.eigvalsh(lowenergy_bloch(0.0, h, N, pr).matrix)
    b = np.linalg.eigvalsh(lowenergy_bloch(math.pi * h, h, N, pr).matrix)
    mid = len(a) // 2
    assert np.abs(a[mid - 2:mid + 2] - b[mid - 2:mid + 2]).max() < 1e-4


def test_chiral_form_and_original_have_equal_circle_spectra():
    from moirewkb.models import harper_chiral_form
    pr = ModelParams(0.0, 1.0, 0.5)
    h, N = harper_h(15), 40
    a = np.linalg.eigvalsh(circle_quantize(harper_symbol(pr), h, N).matrix)
    b = np.linalg.eigvalsh(circle_quantize(harper_chiral_form(pr), h, N).matrix)
    assert np.abs(a - b).max() < 1e-10


def test_trivial_unfolding_is_the_dual_symbol():
    from moirewkb.models import commensurable_unfold, dual_harper_symbol
    from moirewkb.symbols import eval_symbol
    pr = ModelParams(0.3, 0.8, 0.5)
    x, xi = np.array([0.1, 0.7]), np.array([-0.2, 0.45])
    a = eval_symbol(commensurable_unfold(0, 1, pr), x, xi, 0.01)
    b = eval_symbol(dual_harper_symbol(pr), x, xi, 0.01)
    assert np.abs(a - b).max() < 1e-13
