"""
Scalar Bohr-Sommerfeld rule at a nondegenerate minimum.

For p ~ p0 + h p1 + h^2 p2 the eigenvalues near the minimum solve
F0(E) + h F1(E) + h^2 F2(E) = k h, k = 1, 2, ...  with

    F0 = (1/2pi) oint xi dx,
    F1 = 1/2 - (1/2pi) oint p1 dt,
    F2 = (1/4pi) d/dtau oint (p1^2 - det(Hess p0)/12) dt - (1/2pi) oint p2 dt,

integrals taken over one period of the Hamilton flow of p0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, interpolate, optimize

from .symbols import PhaseSpaceSymbol, differentiate, eval_symbol


class NoClosedOrbit(RuntimeError):
    pass


class OutOfRange(ValueError):
    pass


def _scalar(S):
    if S is None:
        return None
    if isinstance(S, PhaseSpaceSymbol):
        if S.dim != 1:
            raise ValueError("scalar symbols only")
        return S
    return PhaseSpaceSymbol.constant([[complex(S)]])


class _Fn:
    """Real scalar symbol with cached exact derivatives, evaluated at h = 0."""

    def __init__(self, S):
        self.S = _scalar(S)
        self._d = {}

    def d(self, nx=0, nxi=0):
        key = (nx, nxi)
        if key not in self._d:
            T = self.S
            for _ in range(nx):
                T = differentiate(T, "x")
            for _ in range(nxi):
                T = differentiate(T, "xi")
            self._d[key] = T
        return self._d[key]

    def __call__(self, x, xi, nx=0, nxi=0):
        return eval_symbol(self.d(nx, nxi), x, xi, 0.0)[..., 0, 0].real


@dataclass
class ScalarSymbolSeries:
    """p0 + h p1 + h^2 p2 with a registered minimum p0(x0, xi0) = 0."""
    p0: object
    p1: object = 0.0
    p2: object = 0.0
    x0: float = 0.0
    xi0: float = 0.0

    def __post_init__(self):
        self._f = [_Fn(self.p0), _Fn(self.p1), _Fn(self.p2)]

    def f(self, k):
        return self._f[k]


@dataclass
class OrbitData:
    tau: float
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    period: float


def _start_point(p0, tau, x0, xi0, reach=10.0):
    """Point (x0 + r, xi0) on p0 = tau, r found by bracketing outwards."""
    g = lambda r: p0(x0 + r, xi0) - tau  # noqa: E731
    r_hi = 1e-6
    while g(r_hi) < 0:
        r_hi *= 1.5
        if r_hi > reach:
            raise NoClosedOrbit(f"level {tau} not reached along the x-ray (above the saddle?)")
    return optimize.brentq(g, 0.0, r_hi, xtol=1e-15, rtol=1e-15)


def trace_orbit(p0, tau, tol=1e-12, x0=0.0, xi0=0.0, samples=2048, max_period=1e6, reach=10.0):
    """One period of x' = d_xi p0, xi' = -d_x p0 on p0 = tau, started at (x0 + r, xi0).

    The return is located with two event searches: the first crossing of
    xi = xi0 from below (far side) and then the crossing from above.
    """
    f = p0 if isinstance(p0, _Fn) else _Fn(p0)
    if tau <= 0:
        raise NoClosedOrbit("energy must be positive")
    r = _start_point(f, tau, x0, xi0, reach)
    z0 = np.array([x0 + r, xi0])

    def rhs(t, z):
        return [f(z[0], z[1], 0, 1), -f(z[0], z[1], 1, 0)]

    def up(t, z):
        return z[1] - xi0
    up.terminal, up.direction = True, 1

    def down(t, z):
        return z[1] - xi0
    down.terminal, down.direction = True, -1

    opts = dict(method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=True)
    first = integrate.solve_ivp(rhs, (0.0, max_period), z0, events=up, **opts)
    if not first.t_events[0].size:
        raise NoClosedOrbit(f"no half-period crossing at tau={tau}")
    t_half = first.t_events[0][0]
    z_half = first.y_events[0][0]
    second = integrate.solve_ivp(rhs, (t_half, t_half + max_period), z_half, events=down, **opts)
    if not second.t_events[0].size:
        raise NoClosedOrbit(f"orbit does not return at tau={tau}")
    period = second.t_events[0][0]
    zend = second.y_events[0][0]
    if np.hypot(*(zend - z0)) > 1e-8 * max(1.0, r):
        raise NoClosedOrbit(f"orbit misses its start by {np.hypot(*(zend - z0)):.2e}")
    t = np.linspace(0.0, period, samples, endpoint=False)
    z = np.where(t <= t_half, first.sol(np.minimum(t, t_half)), second.sol(np.maximum(t, t_half)))
    return OrbitData(tau, t, z[0], z[1], period)


def _loop_integral(orbit, values):
    """Periodic trapezoid rule over one period."""
    return float(np.mean(values) * orbit.period)


def orbit_action(p0, orbit):
    """(1/2pi) oint xi dx with dx = d_xi p0 dt."""
    f = p0 if isinstance(p0, _Fn) else _Fn(p0)
    xdot = f(orbit.x, orbit.xi, 0, 1)
    return abs(_loop_integral(orbit, orbit.xi * xdot)) / (2 * math.pi)


def _f2_bracket(series, orbit):
    f0, f1 = series.f(0), series.f(1)
    x, xi = orbit.x, orbit.xi
    det = f0(x, xi, 2, 0) * f0(x, xi, 0, 2) - f0(x, xi, 1, 1) ** 2
    return _loop_integral(orbit, f1(x, xi) ** 2 - det / 12.0)


def F_series(series: ScalarSymbolSeries, tau, dtau=None, tol=1e-12):
    """(F0, F1, F2) at energy tau."""
    f0 = series.f(0)
    kw = dict(tol=tol, x0=series.x0, xi0=series.xi0)
    orb = trace_orbit(f0, tau, **kw)
    F0 = orbit_action(f0, orb)
    F1 = 0.5 - _loop_integral(orb, series.f(1)(orb.x, orb.xi)) / (2 * math.pi)
    dtau = dtau if dtau is not None else 1e-3 * tau
    jp = _f2_bracket(series, trace_orbit(f0, tau + dtau, **kw))
    jm = _f2_bracket(series, trace_orbit(f0, tau - dtau, **kw))
    F2 = (jp - jm) / (2 * dtau) / (4 * math.pi) - _loop_integral(orb, series.f(2)(orb.x, orb.xi)) / (2 * math.pi)
    return F0, F1, F2


@dataclass
class FTable:
    tau: np.ndarray
    F0: np.ndarray
    F1: np.ndarray
    F2: np.ndarray

    def F(self, h):
        return self.F0 + h * self.F1 + h * h * self.F2


def F_table(series, taus, tol=1e-12):
    rows = [F_series(series, t, tol=tol) for t in taus]
    a = np.array(rows)
    return FTable(np.asarray(taus, dtype=float), a[:, 0], a[:, 1], a[:, 2])


def invert_F(table: FTable, k, h, tol=1e-12):
    """Solve F0 + h F1 + h^2 F2 = k h for the energy by bisection on a spline of the table."""
    if np.any(np.diff(table.F0) <= 0):
        raise ValueError("F0 must be strictly increasing on the grid")
    Fv = table.F(h)
    spline = interpolate.CubicSpline(table.tau, Fv)
    target = k * h
    if not (Fv[0] <= target <= Fv[-1]):
        raise OutOfRange(f"k h = {target:.6g} outside [{Fv[0]:.6g}, {Fv[-1]:.6g}]")
    lo, hi = float(table.tau[0]), float(table.tau[-1])
    g = lambda t: float(spline(t)) - target  # noqa: E731
    if g(lo) == 0:
        return lo
    return optimize.brentq(g, lo, hi, xtol=tol * max(1.0, abs(hi)), rtol=4 * np.finfo(float).eps)


def harmonic_series(lam):
    """p0 = lam/2 (x^2 + xi^2)."""
    p0 = PhaseSpaceSymbol(1, {0: {(0, 0): {(2, 0, 0, 0, 0): lam / 2, (0, 2, 0, 0, 0): lam / 2}}})
    return ScalarSymbolSeries(p0)


# anti-chiral ladders
ANTICHIRAL_C = lambda w0: (-3 - 3 * w0, -3 - w0, -1 - 3 * w0, -1 - w0)  # noqa: E731


def antichiral_levels(w0, h, j, k, spacing="stated"):
    """Level k of ladder j: c_j + s (k + 1/2) h.

    ``spacing="stated"`` uses s = 8 pi^2 w0; ``"harmonic"`` uses the
    oscillator frequency of the minimum, s = 8 pi^2 sqrt(w0).  The two
    agree only at w0 = 1.
    """
    if j not in (1, 2, 3, 4) or k < 0:
        raise ValueError("j in 1..4 and k >= 0")
    s = 8 * math.pi**2 * (w0 if spacing == "stated" else math.sqrt(w0))
    return ANTICHIRAL_C(w0)[j - 1] + s * (k + 0.5) * h


def antichiral_series(w0, j, k_perp=0.0):
    """Shifted diagonal entry p0 = entry_j - c_j with its minimum registered."""
    from .models import ModelParams, antichiral_diag, antichiral_minima
    ent = antichiral_diag(ModelParams(w0=w0, w1=0.0, k_perp=k_perp))[j - 1]
    c, x0, xi0 = antichiral_minima(w0, k_perp)[j - 1]
    return ScalarSymbolSeries(ent - c, x0=x0, xi0=xi0)


def saddle_energy(series, reach=0.5, grid=400):
    """Smallest p0 on the boundary of the square of half-width ``reach`` around the well."""
    f = series.f(0)
    s = np.linspace(-reach, reach, grid)
    edges = [(series.x0 + s, series.xi0 + reach + 0 * s), (series.x0 + s, series.xi0 - reach + 0 * s),
             (series.x0 + reach + 0 * s, series.xi0 + s), (series.x0 - reach + 0 * s, series.xi0 + s)]
    return float(min(f(x, xi).min() for x, xi in edges))


def default_tau_grid(series, count=200):
    top = saddle_energy(series)
    return np.geomspace(1e-4 * top, 0.8 * top, count)
