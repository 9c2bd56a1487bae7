import math

import numpy as np
import pytest

from moirewkb.bohr_sommerfeld import (FTable, NoClosedOrbit, OutOfRange, ScalarSymbolSeries, F_series,
                                      F_table, antichiral_levels, antichiral_series, harmonic_series,
                                      invert_F, orbit_action, trace_orbit)
from moirewkb.hermite import galerkin_matrix
from moirewkb.symbols import PhaseSpaceSymbol


def poly(c):
    return PhaseSpaceSymbol(1, {0: {(0, 0): {(a, b, 0, 0, 0): v for (a, b), v in c.items()}}})


@pytest.fixture(scope="module")
def anharmonic():
    """p0 = (x^2 + xi^2)/2 + 0.3 x^4, p1 = 0.2 (x^2 + xi^2), p2 = 0.7 x^2."""
    ser = ScalarSymbolSeries(poly({(2, 0): 0.5, (0, 2): 0.5, (4, 0): 0.3}),
                             poly({(2, 0): 0.2, (0, 2): 0.2}), poly({(2, 0): 0.7}))
    return F_table(ser, np.geomspace(1e-3, 0.5, 40))


def galerkin_oracle(h, count=3):
    # p(x, hD) in y = x / sqrt(h): an oscillator plus a quartic, diagonalized in a Hermite basis
    S = poly({(2, 0): h / 2 + 0.2 * h * h + 0.7 * h**3, (0, 2): h / 2 + 0.2 * h * h, (4, 0): 0.3 * h * h})
    return np.linalg.eigvalsh(galerkin_matrix(S, 1.0, 120))[:count]


def test_harmonic_orbit_period_and_action():
    lam = 1.7
    ser = harmonic_series(lam)
    orb = trace_orbit(ser.f(0), 0.3)
    assert orb.period == pytest.approx(2 * math.pi / lam, rel=1e-10)
    assert orbit_action(ser.f(0), orb) == pytest.approx(0.3 / lam, rel=1e-10)


def test_harmonic_F_is_exact():
    F0, F1, F2 = F_series(harmonic_series(1.7), 0.3)
    assert (F0, F1) == pytest.approx((0.3 / 1.7, 0.5), abs=1e-10)
    assert abs(F2) < 1e-8


def test_dF0_is_period_over_2pi():
    ser = ScalarSymbolSeries(poly({(2, 0): 0.5, (0, 2): 0.5, (4, 0): 0.3}))
    tau, d = 0.2, 1e-5
    slope = (F_series(ser, tau + d)[0] - F_series(ser, tau - d)[0]) / (2 * d)
    period = trace_orbit(ser.f(0), tau).period
    assert slope == pytest.approx(period / (2 * math.pi), rel=1e-7)


def test_open_level_raises():
    # x^2 - x^4 has no closed orbit above its saddle at 1/4
    with pytest.raises(NoClosedOrbit):
        trace_orbit(ScalarSymbolSeries(poly({(2, 0): 1.0, (0, 2): 1.0, (4, 0): -1.0})).f(0), 0.3)


def test_invert_round_trip_and_linear_exactness():
    taus = np.linspace(0.001, 1.0, 30)
    tab = FTable(taus, 2 * taus, 0.5 + 0 * taus, 0 * taus)
    h = 0.01
    for k in (1, 3, 7):
        E = invert_F(tab, k, h)
        assert 2 * E + 0.5 * h == pytest.approx(k * h, abs=1e-12)
    with pytest.raises(OutOfRange):
        invert_F(tab, 1000, h)
    with pytest.raises(ValueError):
        invert_F(FTable(taus, -taus, 0 * taus, 0 * taus), 1, h)


def test_anharmonic_levels_error_is_third_order(anharmonic):
    hs = [0.02, 0.01, 0.005]
    errs = []
    for h in hs:
        pred = np.array([invert_F(anharmonic, k, h) for k in (1, 2, 3)])
        errs.append(np.abs(pred - galerkin_oracle(h)).max())
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope > 2.8
    assert errs[-1] < 1e-8


def test_dropping_F2_loses_an_order(anharmonic):
    h = 0.005
    tab = FTable(anharmonic.tau, anharmonic.F0, anharmonic.F1, 0 * anharmonic.F2)
    pred = np.array([invert_F(tab, k, h) for k in (1, 2, 3)])
    assert np.abs(pred - galerkin_oracle(h)).max() > 1e-6


def test_antichiral_ladder_values():
    h = 0.003
    assert antichiral_levels(1.0, h, 1, 0) == pytest.approx(-6 + 8 * math.pi**2 * h / 2)
    got = [antichiral_levels(0.7, 0.0, j, 0) for j in (1, 2, 3, 4)]
    assert got == pytest.approx([-5.1, -3.7, -3.1, -1.7])
    a = antichiral_levels(0.7, h, 2, 3, spacing="harmonic") - antichiral_levels(0.7, h, 2, 2, spacing="harmonic")
    assert a == pytest.approx(8 * math.pi**2 * math.sqrt(0.7) * h)
    with pytest.raises(ValueError):
        antichiral_levels(1.0, h, 5, 0)


def test_antichiral_small_orbits_have_harmonic_frequency():
    # near the minimum F0 ~ tau / (8 pi^2 sqrt(w0))
    for w0 in (0.7, 1.0):
        ser = antichiral_series(w0, 1)
        tau = 1e-4
        assert F_series(ser, tau)[0] / tau == pytest.approx(1 / (8 * math.pi**2 * math.sqrt(w0)), rel=1e-3)
