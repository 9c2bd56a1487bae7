"""
Symbols of the one-dimensional moire models and their reductions.

Two models share the potentials U = 1 + 2cos(2 pi x) and
U^{+/-} = 1 - cos(2 pi x) +/- sqrt(3) sin(2 pi x):

* the Harper symbol  b = 2 t(k_perp) cos(2 pi xi) + t_0 + V_w(x)
  (quantized on the circle with h = 1/(2 pi L)),
* the low-energy Dirac symbol, linear in xi (h = 1/L).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import optimize

from .symbols import (
    PhaseSpaceSymbol, WellCandidate, fourier, moyal_product, monomial,
    eval_symbol, principal_part, principal_eigenvalues, taylor_expand, rescale_to_well,
)

SQ3 = math.sqrt(3.0)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)
GAMMA15 = np.kron(np.eye(2), SIGMA1)
GAMMA25 = np.kron(np.eye(2), SIGMA2)
# conjugation diagonalizing the anti-chiral Harper symbol
ANTICHIRAL_U = 0.5 * np.array([[1, -1, -1, 1], [-1, 1, -1, 1], [-1, -1, 1, 1], [1, 1, 1, 1]], dtype=float)

U_AC = {0: 1.0, 1: 1.0, -1: 1.0}
U_PLUS = {0: 1.0, 1: -0.5 - 0.5j * SQ3, -1: -0.5 + 0.5j * SQ3}
U_MINUS = {0: 1.0, 1: -0.5 + 0.5j * SQ3, -1: -0.5 - 0.5j * SQ3}


@dataclass
class ModelParams:
    """Coupling (w0, w1), transverse momentum k_perp and Bloch ratio k_x/h."""
    w0: float = 0.0
    w1: float = 1.0
    k_perp: float = 0.0
    kx_ratio: float = 0.0

    @property
    def chiral(self):
        return self.w0 == 0

    @property
    def antichiral(self):
        return self.w1 == 0

    def to_dict(self):
        return asdict(self)


def harper_h(L):
    return 1.0 / (2.0 * math.pi * L)


def lowenergy_h(L):
    return 1.0 / L


def _scalar(coeffs, variable="x"):
    return fourier(coeffs, variable)


def _assemble(dim, entries):
    """Build a dim x dim symbol from {(i, j): scalar symbol}."""
    grades = {}
    for (i, j), s in entries.items():
        for g, mat in s.grades.items():
            e = mat.get((0, 0))
            if e:
                tgt = grades.setdefault(g, {}).setdefault((i, j), {})
                for k, v in e.items():
                    tgt[k] = tgt.get(k, 0.0) + v
    return PhaseSpaceSymbol(dim, grades)


def _kron_scalar(M, s):
    """Constant matrix M times scalar symbol s."""
    M = np.asarray(M, dtype=complex)
    d = M.shape[0]
    return _assemble(d, {(i, j): s.scale(M[i, j]) for i in range(d) for j in range(d) if M[i, j] != 0})


def potentials():
    """Scalar symbols (U, U+, U-) as trigonometric polynomials in x."""
    return _scalar(U_AC), _scalar(U_PLUS), _scalar(U_MINUS)


def hopping_matrices(k_perp):
    t = math.cos(2 * math.pi * k_perp) * GAMMA15 + math.sin(2 * math.pi * k_perp) * GAMMA25
    return t, GAMMA15.copy()


def chiral_potential_matrix(w0, w1, Ux, Upx, Umx):
    """4x4 potential V_w from scalar symbols of U, U+, U- (any variable)."""
    return _assemble(4, {
        (0, 2): Ux.scale(w0), (1, 3): Ux.scale(w0), (2, 0): Ux.scale(w0), (3, 1): Ux.scale(w0),
        (0, 3): Umx.scale(w1), (1, 2): Upx.scale(w1), (2, 1): Upx.scale(w1), (3, 0): Umx.scale(w1),
    })


def harper_symbol(params: ModelParams):
    """4x4 Hermitian symbol 2 t(k_perp) cos(2 pi xi) + t_0 + V_w(x)."""
    t, t0 = hopping_matrices(params.k_perp)
    cos_xi = _scalar({1: 1.0, -1: 1.0}, "xi")
    U, Up, Um = potentials()
    return (_kron_scalar(t, cos_xi) + PhaseSpaceSymbol.constant(t0)
            + chiral_potential_matrix(params.w0, params.w1, U, Up, Um))


def dual_harper_symbol(params: ModelParams, shift=0.0):
    """Harper symbol with the roles of x and xi exchanged, potential shifted by ``shift``.

    Its circle quantization at h is the tight-binding chain with site
    potential V_w(shift + 2 pi h n) and hopping t(k_perp).
    """
    t, t0 = hopping_matrices(params.k_perp)
    cos_x = _scalar({1: 1.0, -1: 1.0}, "x")

    def shifted(c):
        return _scalar({k: v * np.exp(2j * math.pi * k * shift) for k, v in c.items()}, "xi")

    return (_kron_scalar(t, cos_x) + PhaseSpaceSymbol.constant(t0)
            + chiral_potential_matrix(params.w0, params.w1, shifted(U_AC), shifted(U_PLUS), shifted(U_MINUS)))


_LEFT = np.array([[1j, 1], [-1j, 1]])
_RIGHT = np.array([[-1j, 1j], [1, 1]])


def _offdiag_form(D):
    """[[0, D], [D*, 0]] from a 2x2 symbol D."""
    Ds = D.adjoint()
    grades = {}
    for src, (ro, co) in ((D, (0, 2)), (Ds, (2, 0))):
        for g, mat in src.grades.items():
            for (i, j), e in mat.items():
                grades.setdefault(g, {})[(i + ro, j + co)] = dict(e)
    return PhaseSpaceSymbol(4, grades)


def harper_chiral_block(params: ModelParams):
    """Symbol of D_c; the chiral Harper operator is equivalent to [[0, D_c], [D_c*, 0]]."""
    ups = _scalar({1: np.exp(2j * math.pi * params.k_perp), -1: np.exp(2j * math.pi * params.k_perp),
                   0: 1.0}, "xi")
    _, Up, Um = potentials()
    M = _assemble(2, {(0, 0): ups, (1, 1): ups, (0, 1): Up.scale(params.w1), (1, 0): Um.scale(params.w1)})
    return M.matmul_const(0.5 * _LEFT, _RIGHT)


def harper_chiral_form(params: ModelParams):
    return _offdiag_form(harper_chiral_block(params))


def chiral_harper_squared(params: ModelParams):
    """Full symbol of the square of the chiral Harper operator (block diagonal, exact in h)."""
    if params.w0 != 0:
        raise ValueError("chiral reduction needs w0 = 0")
    H = harper_chiral_form(params)
    return moyal_product(H, H)


def lowenergy_symbol(params: ModelParams):
    """4x4 symbol of the low-energy Bloch Hamiltonian; k_x enters as h * kx_ratio."""
    kin = monomial(0, 1)
    kx = PhaseSpaceSymbol.constant([[params.kx_ratio]], grade=2)
    kp = params.k_perp
    U, Up, Um = potentials()
    minus = kin + kx + (-1j * kp)
    plus = kin + kx + (1j * kp)
    V = chiral_potential_matrix(params.w0, params.w1, U, Up, Um)
    K = _assemble(4, {(0, 1): minus, (1, 0): plus, (2, 3): minus, (3, 2): plus})
    return K + V


def lowenergy_chiral_block(params: ModelParams):
    kin = monomial(0, 1) + PhaseSpaceSymbol.constant([[params.kx_ratio]], grade=2) + 1j * params.k_perp
    _, Up, Um = potentials()
    M = _assemble(2, {(0, 0): kin, (1, 1): kin, (0, 1): Up.scale(params.w1), (1, 0): Um.scale(params.w1)})
    return M.matmul_const(0.5 * _LEFT, _RIGHT)


def lowenergy_chiral_form(params: ModelParams):
    return _offdiag_form(lowenergy_chiral_block(params))


def chiral_lowenergy_squared(params: ModelParams):
    if params.w0 != 0:
        raise ValueError("chiral reduction needs w0 = 0")
    L = lowenergy_chiral_form(params)
    return moyal_product(L, L)


def antichiral_diag(params: ModelParams):
    """Four scalar diagonal entries of the anti-chiral Harper symbol after conjugation."""
    twice = 2 * params.k_perp
    if abs(twice - round(twice)) > 1e-12:
        raise ValueError("anti-chiral diagonalization needs k_perp in Z/2")
    sgn = 1.0 if round(twice) % 2 == 0 else -1.0
    kin = _scalar({0: 1.0, 1: sgn, -1: sgn}, "xi")  # 1 +/- 2cos(2 pi xi)
    U = _scalar(U_AC).scale(params.w0)
    return [(-kin) - U, (-kin) + U, kin - U, kin + U]


def antichiral_minima(w0, k_perp=0.0):
    """(c_j, x_j, xi_j) for the four diagonal entries."""
    half = round(2 * k_perp) % 2 == 1
    c = [-3 - 3 * w0, -3 - w0, -1 - 3 * w0, -1 - w0]
    xs = [0.0, 0.5, 0.0, 0.5]
    xis = [0.5, 0.5, 0.0, 0.0] if half else [0.0, 0.0, 0.5, 0.5]
    return list(zip(c, xs, xis))


# wells
class ClassificationAmbiguous(RuntimeError):
    """Eigenvalues coalesce on a whole neighbourhood of a candidate well."""


@dataclass
class WellReport(WellCandidate):
    model: str = ""
    branch_sign: int = 0
    scale: float = 1.0

    def to_dict(self):
        return {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in asdict(self).items()}


@dataclass
class WellSearch:
    wells: list
    curves: list = field(default_factory=list)


def _trace_fn(P):
    P0 = principal_part(P)

    def tr(z):
        M = eval_symbol(P0, z[0], z[1], 0.0)
        return float(np.trace(M).real)
    return tr


def find_wells(S, x_range=(-0.5, 0.5), xi_range=(-0.5, 0.5), grid=256, tol=1e-10,
               probe=1e-3, model="", zero_tol=1e-8):
    """Locate degenerate wells of a 2x2 positive semi-definite principal symbol.

    A degenerate well is a point where the whole principal matrix vanishes,
    i.e. an isolated zero of its trace.  The zero set of the smaller
    eigenvalue is returned separately as contour polylines.
    """
    if S.dim != 2:
        raise ValueError("find_wells needs a 2x2 block")
    P0 = principal_part(S)
    xs = np.linspace(*x_range, grid, endpoint=False)
    xis = np.linspace(*xi_range, grid, endpoint=False)
    X, XI = np.meshgrid(xs, xis, indexing="ij")
    M = eval_symbol(P0, X, XI, 0.0)
    tr = np.trace(M, axis1=-2, axis2=-1).real
    tr_fn = _trace_fn(S)
    dx, dxi = xs[1] - xs[0], xis[1] - xis[0]
    scale = max(1.0, float(np.abs(tr).max()))
    wells = []
    # local minima of the trace on the (periodic) grid
    nb = [np.roll(np.roll(tr, i, 0), j, 1) for i in (-1, 0, 1) for j in (-1, 0, 1) if (i, j) != (0, 0)]
    is_min = np.all([tr <= n for n in nb], axis=0)
    thresh = 50 * scale * (dx**2 + dxi**2)
    for i, j in zip(*np.nonzero(is_min & (tr < thresh))):
        res = optimize.minimize(tr_fn, [X[i, j], XI[i, j]], method="Nelder-Mead",
                                options={"xatol": 1e-13, "fatol": 1e-16, "maxiter": 4000})
        z = res.x
        if tr_fn(z) > zero_tol * scale:
            continue
        z = _newton_grad(S, z, tol)
        if any(abs(z[0] - w.x0) < 1e-6 and abs(z[1] - w.xi0) < 1e-6 for w in wells):
            continue
        ang = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        lo, hi = principal_eigenvalues(S, z[0] + probe * np.cos(ang), z[1] + probe * np.sin(ang))
        if np.max(hi - lo) < 1e-8:
            raise ClassificationAmbiguous(f"eigenvalues coalesce around ({z[0]:.6f}, {z[1]:.6f})")
        T = taylor_expand(P0, z[0], z[1], 2)
        e = T.grades[0][(0, 0)]
        a = e.get((0, 2, 0, 0, 0), 0).real
        b = e.get((2, 0, 0, 0, 0), 0).real
        w = WellReport(x0=float(z[0]), xi0=float(z[1]), a=a, b=b, degenerate=True,
                       omega=math.sqrt(b / a) if a > 0 and b > 0 else float("nan"),
                       model=model, scale=a)
        try:
            nf = rescale_to_well(S.scale(1.0 / a), WellCandidate(w.x0, w.xi0), 0)
            w.omega, w.mu1, w.mu2 = nf.omega, nf.mu1, nf.mu2
            w.branch_sign = int(np.sign(nf.mu1)) if nf.mu1 else 0
        except ValueError:
            pass
        wells.append(w)
    lo = np.linalg.eigvalsh(M)[..., 0]
    curves = zero_set_curves(xs, xis, lo, tol=1e-3 * scale)
    return WellSearch(sorted(wells, key=lambda w: (round(w.x0, 8), round(w.xi0, 8))), curves)


def _newton_grad(S, z, tol, iters=30):
    """Newton iteration on the gradient of tr sigma_0(S), with exact derivatives."""
    from .symbols import differentiate
    P0 = principal_part(S)
    tr = P0.block([0]) + P0.block([1])
    gx, gxi = differentiate(tr, "x"), differentiate(tr, "xi")
    hxx, hxxi, hxixi = differentiate(gx, "x"), differentiate(gx, "xi"), differentiate(gxi, "xi")

    def ev(T, z):
        return float(eval_symbol(T, z[0], z[1], 0.0)[0, 0].real)

    z = np.array(z, dtype=float)
    for _ in range(iters):
        g = np.array([ev(gx, z), ev(gxi, z)])
        if np.linalg.norm(g) < tol:
            break
        Hm = np.array([[ev(hxx, z), ev(hxxi, z)], [ev(hxxi, z), ev(hxixi, z)]])
        try:
            dz = np.linalg.solve(Hm, g)
        except np.linalg.LinAlgError:
            break
        if np.linalg.norm(dz) > 1e-2:
            break
        z = z - dz
        if np.linalg.norm(dz) < 1e-15:
            break
    return z


def zero_set_curves(xs, xis, values, tol):
    """Polylines of near-zero points of a nonnegative field, grouped by connectivity."""
    from scipy import ndimage
    mask = values < tol
    labels, n = ndimage.label(mask, structure=np.ones((3, 3)))
    curves = []
    for k in range(1, n + 1):
        ii, jj = np.nonzero(labels == k)
        if len(ii) < 4:
            continue
        curves.append(np.column_stack([xs[ii], xis[jj]]))
    return curves


def count_closed_curves(D, grid=256, xi_range=(0.0, 1.0), x_range=(-0.5, 0.5)):
    """Number of closed zero curves of the real determinant of a 2x2 chiral block D.

    det sigma_0(D D*) = |det D|^2, and det D is real here, so curves are the
    places where det D changes sign.  Isolated zeros (the wells) carry no
    sign change and are not counted.  Components are merged across the
    periodic cell boundaries.
    """
    from scipy import ndimage
    xs = np.linspace(*x_range, grid, endpoint=False)
    xis = np.linspace(*xi_range, grid, endpoint=False)
    X, XI = np.meshgrid(xs, xis, indexing="ij")
    det = np.linalg.det(eval_symbol(principal_part(D), X, XI, 0.0))
    if np.abs(det.imag).max() > 1e-9 * max(1.0, float(np.abs(det).max())):
        raise ValueError("determinant is not real; sign-change tracing does not apply")
    eps = 1e-12 * max(1.0, float(np.abs(det).max()))

    def corners(b):
        return np.any([b, np.roll(b, -1, 0), np.roll(b, -1, 1), np.roll(np.roll(b, -1, 0), -1, 1)], axis=0)

    # a cell is on a curve if its corners hold both strict signs
    mask = corners(det.real > eps) & corners(det.real < -eps)
    labels, n = ndimage.label(mask, structure=np.ones((3, 3)))
    parent = list(range(n + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for A, B in ((labels[0, :], labels[-1, :]), (labels[:, 0], labels[:, -1])):
        for shift in (-1, 0, 1):
            for a, b in zip(A, np.roll(B, shift)):
                if a and b:
                    parent[find(a)] = find(b)
    return len({find(k) for k in range(1, n + 1)})


# commensurable unfolding
def commensurable_unfold(p, q, params: ModelParams):
    """4q x 4q symbol t(k_perp) (x) (e^{2 pi i x} J^* + e^{-2 pi i x} J) + t_0 (x) I_q + V~_w(xi).

    J = J_q^p with J_q = diag(gamma^r), gamma = exp(2 pi i/q); the potentials
    in V~_w use the cyclic shift K_q in place of exp(2 pi i x).
    """
    if p < 0 or q < 1 or math.gcd(p, q) != 1:
        raise ValueError(f"p/q = {p}/{q} is not a reduced fraction")
    t, t0 = hopping_matrices(params.k_perp)
    gam = np.exp(2j * math.pi / q)
    J = np.diag(gam ** (p * np.arange(q)))
    K = np.zeros((q, q), dtype=complex)
    for j in range(q):
        K[j, (j + 1) % q] = 1.0
    ex = fourier({1: 1.0}, "x")
    emx = fourier({-1: 1.0}, "x")
    eix = fourier({1: 1.0}, "xi")
    emix = fourier({-1: 1.0}, "xi")
    kin = _kron_scalar(np.kron(t, J.conj().T), ex) + _kron_scalar(np.kron(t, J), emx)

    def pot(coeffs):
        # scalar potential sum_k c_k e^{2 pi i k xi} K^k, as a q x q symbol
        out = _kron_scalar(coeffs.get(0, 0.0) * np.eye(q), monomial())
        out = out + _kron_scalar(coeffs.get(1, 0.0) * K, eix) + _kron_scalar(coeffs.get(-1, 0.0) * K.conj().T, emix)
        return out

    Uq, Upq, Umq = pot(U_AC), pot(U_PLUS), pot(U_MINUS)
    V = _block4(q, params.w0, params.w1, Uq, Upq, Umq)
    return kin + PhaseSpaceSymbol.constant(np.kron(t0, np.eye(q))) + V


def _block4(q, w0, w1, U, Up, Um):
    grades = {}
    pos = {(0, 2): (U, w0), (1, 3): (U, w0), (2, 0): (U, w0), (3, 1): (U, w0),
           (0, 3): (Um, w1), (1, 2): (Up, w1), (2, 1): (Up, w1), (3, 0): (Um, w1)}
    for (I, J), (s, w) in pos.items():
        if w == 0:
            continue
        for g, mat in s.grades.items():
            for (i, j), e in mat.items():
                tgt = grades.setdefault(g, {}).setdefault((I * q + i, J * q + j), {})
                for k, v in e.items():
                    tgt[k] = tgt.get(k, 0.0) + w * v
    return PhaseSpaceSymbol(4 * q, grades)


def harper_normal_form(params: ModelParams, sign=+1, order=2):
    """Normal form series at the Harper well (0, +/- 1/3 (1/2)^{2 k_perp}), symbol divided by 12 pi^2."""
    xi0 = sign * (1.0 / 3.0) * (0.5 ** round(2 * params.k_perp))
    S = chiral_harper_squared(params).block([0, 1]).scale(1.0 / (12 * math.pi**2))
    well = WellCandidate(0.0, xi0)
    return rescale_to_well(S, well, order)


def lowenergy_normal_form(params: ModelParams, order=2):
    S = chiral_lowenergy_squared(params).block([0, 1])
    return rescale_to_well(S, WellCandidate(0.0, 0.0), order)
