"""
Finite matrices for the moire operators: Fourier truncation on the circle,
tight-binding Bloch matrices, band sweeps and flatness.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .models import (ModelParams, hopping_matrices, lowenergy_symbol, U_AC, U_PLUS, U_MINUS)


class EigensolverError(RuntimeError):
    pass


@dataclass
class OperatorMatrix:
    matrix: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.matrix.shape[0]

    def hermiticity_defect(self):
        M = self.matrix
        return float(np.abs(M - M.conj().T).max()) if M.size else 0.0


def fourier_modes(N):
    return np.arange(-N, N + 1)


def circle_quantize(S, h, N, k_min=None):
    """Weyl quantization of a symbol periodic in x on 2N+1 consecutive Fourier modes.

    Modes run from ``k_min`` (default -N).  A term c(xi) e^{2 pi i m x}
    sends mode k to k + m with weight c(2 pi h (k + m/2)); this midpoint rule
    is exact for Weyl quantization.  Rows and columns are ordered
    component-major: index = a * (2N+1) + (k - k_min).
    """
    d = S.dim
    n = 2 * N + 1
    k_min = -N if k_min is None else int(k_min)
    k = np.arange(k_min, k_min + n)
    M = np.zeros((d * n, d * n), dtype=complex)
    for g, mat in S.grades.items():
        hp = h ** (g / 2.0) if g else 1.0
        for (i, j), e in mat.items():
            block = M[i * n:(i + 1) * n, j * n:(j + 1) * n]
            for (a, b, m, nn, s), v in e.items():
                if a:
                    raise ValueError("circle quantization needs symbols periodic in x (no powers of x)")
                if abs(m) >= n:
                    continue
                idx = np.arange(max(0, -m), n - max(0, m))  # columns whose image stays in range
                xi = 2 * math.pi * h * (k[idx] + 0.5 * m)
                w = hp * v * np.exp(2j * math.pi * nn * xi + 2j * math.pi**2 * s * h)
                if b:
                    w = w * xi**b
                block[idx + m, idx] += w
    return OperatorMatrix(M, {"kind": "circle", "h": h, "N": N, "k_min": k_min, "dim": d})


def circle_kx_positions(N, grid=256, k_min=None):
    """Sample matrix mapping mode coefficients to values on an x-grid."""
    k_min = -N if k_min is None else k_min
    x = np.arange(grid) / grid
    return x, np.exp(2j * math.pi * np.outer(x, np.arange(k_min, k_min + 2 * N + 1)))


def position_density(vec, N, dim, grid=256, k_min=None):
    """|u(x)|^2 summed over components on a uniform grid of the circle, normalized."""
    x, E = circle_kx_positions(N, grid, k_min)
    f = E @ vec.reshape(dim, 2 * N + 1).T
    dens = (np.abs(f) ** 2).sum(axis=1)
    return x, dens / dens.sum()


def hermitian_eigensolve(M, check=True):
    """Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix."""
    A = M.matrix if isinstance(M, OperatorMatrix) else np.asarray(M)
    defect = float(np.abs(A - A.conj().T).max()) if A.size else 0.0
    scale = max(1.0, float(np.abs(A).max())) if A.size else 1.0
    if defect > 1e-10 * scale:
        raise EigensolverError(f"matrix is not Hermitian (defect {defect:.2e})")
    A = 0.5 * (A + A.conj().T)
    try:
        w, V = linalg.eigh(A)
    except linalg.LinAlgError as exc:
        prov = M.provenance if isinstance(M, OperatorMatrix) else {}
        raise EigensolverError(f"eigh failed for {prov}: {exc}") from exc
    if check and A.size:
        res = np.linalg.norm(A @ V - V * w, axis=0).max()
        if res > 1e-9 * max(1.0, np.linalg.norm(A, 2)):
            raise EigensolverError(f"residual {res:.2e} too large")
    return w, V


def tight_binding_bloch(p, q, k_x, params: ModelParams, offset=0.0):
    """Bloch matrix of the tight-binding chain with moire length L = p/q.

    Site n carries V_w(offset + n q/p), which repeats after p sites, so the
    cell has p sites and the matrix is 4p x 4p.  The cyclic shift J carries
    e^{i k_x} in its corner.
    """
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    g = math.gcd(p, q)
    p, q = p // g, q // g
    t, t0 = hopping_matrices(params.k_perp)
    J = np.zeros((p, p), dtype=complex)
    for i in range(1, p):
        J[i, i - 1] = 1.0
    J[0, p - 1] += np.exp(1j * k_x)
    sites = offset + np.arange(1, p + 1) * q / p

    def diag_of(coeffs):
        return np.diag(sum(c * np.exp(2j * math.pi * m * sites) for m, c in coeffs.items()))

    U, Up, Um = diag_of(U_AC), diag_of(U_PLUS), diag_of(U_MINUS)
    E = lambda i, j: np.eye(1, 4 * 4, 4 * i + j).reshape(4, 4)  # noqa: E731
    V = params.w0 * (np.kron(E(0, 2) + E(2, 0) + E(1, 3) + E(3, 1), U))
    V = V + params.w1 * (np.kron(E(0, 3), Um) + np.kron(E(3, 0), Um.conj())
                         + np.kron(E(1, 2), Up) + np.kron(E(2, 1), Up.conj()))
    M = np.kron(t, J + J.conj().T) + np.kron(t0, np.eye(p)) + V
    return OperatorMatrix(M, {"kind": "tight_binding", "L": f"{p}/{q}", "k_x": k_x,
                              "offset": offset, **params.to_dict()})


def lowenergy_bloch(k_x, h, N, params: ModelParams):
    """Low-energy Bloch Hamiltonian at quasimomentum k_x on modes |n| <= N."""
    pr = ModelParams(params.w0, params.w1, params.k_perp, kx_ratio=k_x / h)
    M = circle_quantize(lowenergy_symbol(pr), h, N)
    M.provenance.update({"kind": "lowenergy", "k_x": k_x, **params.to_dict()})
    return M


def well_eigenvalues(M: OperatorMatrix, emin, emax, center=0.0, window=0.25, threshold=0.5, grid=256):
    """Eigenvalues in [emin, emax) whose x-density has more than ``threshold`` within ``window`` of ``center``."""
    p = M.provenance
    w, V = hermitian_eigensolve(M)
    sel = (w >= emin) & (w < emax)
    out = []
    for e, v in zip(w[sel], V[:, sel].T):
        x, d = position_density(v, p["N"], p["dim"], grid, p.get("k_min"))
        dist = np.abs((x - center + 0.5) % 1.0 - 0.5)
        if d[dist < window].sum() > threshold:
            out.append(e)
    return np.array(out)


@dataclass
class BandStructure:
    k: np.ndarray
    bands: np.ndarray  # shape (len(k), nbands), rows sorted
    metadata: dict = field(default_factory=dict)

    def to_csv(self, window=(-2.0, 2.0)):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k_x", "band_index", "eigenvalue"])
        for kk, row in zip(self.k, self.bands):
            for i, e in enumerate(row):
                if window is None or window[0] <= e <= window[1]:
                    w.writerow([f"{kk:.12g}", i, f"{e:.12g}"])
        return buf.getvalue()


def band_sweep(builder, k_grid, around_zero=None):
    """Eigenvalues of ``builder(k)`` for each k; builder returns an OperatorMatrix or array.

    ``around_zero=m`` keeps only the 2m bands in the middle of the spectrum
    (the chiral models are symmetric about zero), which is much cheaper.
    """
    k_grid = np.asarray(k_grid, dtype=float)
    if k_grid.size == 0:
        raise ValueError("empty k grid")
    rows = []
    meta = {}
    for k in k_grid:
        M = builder(k)
        A = M.matrix if isinstance(M, OperatorMatrix) else M
        A = 0.5 * (A + A.conj().T)
        if around_zero:
            mid = A.shape[0] // 2
            lo, hi = max(0, mid - around_zero), min(A.shape[0], mid + around_zero) - 1
            rows.append(linalg.eigh(A, eigvals_only=True, subset_by_index=(lo, hi)))
            meta["first_band"] = lo
        else:
            rows.append(linalg.eigvalsh(A))
    return BandStructure(k_grid, np.array(rows), meta)


def flatness(bs: BandStructure, band: int, h=0.0):
    """(max - min, relative flatness) of one band over the k grid."""
    col = bs.bands[:, band]
    spread = float(col.max() - col.min())
    return spread, spread / max(float(np.abs(col).max()), h)


def first_positive_band(bs: BandStructure, tol=1e-9):
    """Index of the lowest band that is nonnegative at every k."""
    ok = np.all(bs.bands > -tol, axis=0)
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        raise ValueError("no nonnegative band")
    return int(idx[0])


# cutoffs and the massive operator
def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def flat_bump(dist, inner, outer):
    """1 for |dist| <= inner, 0 for |dist| >= outer, smooth in between."""
    return smooth_step((outer - np.abs(dist)) / (outer - inner))


def fejer_bump(x, order, x0=0.0):
    """Fejer kernel of the given order centred at x0, scaled to maximum one."""
    d = np.asarray(x) - x0
    s = np.sin(math.pi * d)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = (np.sin(order * math.pi * d) / (order * s)) ** 2
    return np.where(np.abs(s) < 1e-14, 1.0, val)


def cutoff_matrix(h, N, x0, xi0, x_radius, xi_radius, dim, k_min=None, inner=0.8,
                  x_profile="flat", fejer_order=8, xi_period=1.0, grid=4096):
    """Standard quantization of chi1(x) chi2(xi), symmetrized, as a (dim * (2N+1)) matrix.

    chi1 is a flat-top bump (1 on |x - x0| <= inner * x_radius) or, with
    ``x_profile="fejer"``, a Fejer kernel of the given order.  chi2 is the
    flat-top bump in xi evaluated on the fiber points 2 pi h k.
    """
    n = 2 * N + 1
    k_min = -N if k_min is None else int(k_min)
    xs = np.arange(grid) / grid
    dx = (xs - x0 + 0.5) % 1.0 - 0.5
    if x_profile == "fejer":
        chi1 = fejer_bump(xs, fejer_order, x0)
    else:
        chi1 = flat_bump(dx, inner * x_radius, x_radius)
    c = np.fft.fft(chi1) / grid  # c[m] multiplies e^{2 pi i m x}
    k = np.arange(k_min, k_min + n)
    dxi = 2 * math.pi * h * k - xi0
    if xi_period:
        dxi = (dxi + 0.5 * xi_period) % xi_period - 0.5 * xi_period
    chi2 = flat_bump(dxi, inner * xi_radius, xi_radius)
    Q = c[(k[:, None] - k[None, :]) % grid] * chi2[None, :]
    Q = 0.5 * (Q + Q.conj().T)
    return np.kron(np.eye(dim), Q)


def massive_operator(M: OperatorMatrix, well, x_radius=0.3, xi_radius=0.3, chi=None, **kw):
    """M + (I - sym(Q_chi)) for a circle-quantized M.

    The truncation (h, N, first mode, dimension) is read from the matrix
    provenance.  ``chi=1`` and ``chi=0`` give the trivial cutoffs.
    """
    size = M.matrix.shape[0]
    if chi == 1:
        Q = np.eye(size)
    elif chi == 0:
        Q = np.zeros((size, size))
    else:
        p = M.provenance
        Q = cutoff_matrix(p["h"], p["N"], well.x0, well.xi0, x_radius, xi_radius, p["dim"],
                          k_min=p.get("k_min"), **kw)
    out = M.matrix + (np.eye(size) - Q)
    return OperatorMatrix(0.5 * (out + out.conj().T), {**M.provenance, "massive": True})


def localized_states(M: OperatorMatrix, Q, threshold=0.99, cluster_tol=1e-4):
    """Eigenvalues of M whose eigenvectors carry at least ``threshold`` of <v, Q v>.

    Eigenvalues closer than ``cluster_tol`` form a cluster; inside a cluster
    the basis diagonalizing Q is used, so states split only by tunnelling
    between symmetric wells can still be localized.  Returned values are
    the Rayleigh quotients of the localized vectors.
    """
    w, V = hermitian_eigensolve(M)
    out = []
    start = 0
    for i in range(1, len(w) + 1):
        if i < len(w) and w[i] - w[i - 1] <= cluster_tol:
            continue
        Vc = V[:, start:i]
        m, U = np.linalg.eigh(Vc.conj().T @ Q @ Vc)
        for mass, u in zip(m, U.T):
            if mass >= threshold:
                v = Vc @ u
                out.append((float((v.conj() @ M.matrix @ v).real), float(mass)))
        start = i
    return sorted(out)


# output helpers
def hausdorff(a, b):
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())

    def directed(u, v):
        idx = np.clip(np.searchsorted(v, u), 1, len(v) - 1)
        return float(np.max(np.minimum(np.abs(u - v[idx - 1]), np.abs(u - v[idx]))))
    return max(directed(a, b), directed(b, a)), directed(a, b), directed(b, a)


def bands_svg(bs: BandStructure, xlabel="k_x", ylabel="E", window=(-2, 2), width=480, height=360):
    """Self-contained SVG line plot of the bands inside ``window``."""
    k = bs.k
    lo, hi = window
    pad = 40

    def px(v):
        return pad + (v - k.min()) / max(k.max() - k.min(), 1e-300) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - lo) / (hi - lo) * (height - 2 * pad)

    paths = []
    for col in bs.bands.T:
        if col.max() < lo or col.min() > hi:
            continue
        pts = " ".join(f"{px(a):.2f},{py(min(max(b, lo), hi)):.2f}" for a, b in zip(k, col))
        paths.append(f'<polyline points="{pts}" style="fill:none;stroke:#1f4e9a;stroke-width:1"/>')
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
            f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
            f'style="fill:none;stroke:black"/>' + "".join(paths)
            + f'<text x="{width / 2}" y="{height - 8}" style="font-size:12px;text-anchor:middle">{xlabel}</text>'
            + f'<text x="12" y="{height / 2}" style="font-size:12px">{ylabel}</text></svg>')


def heatmap_svg(values, width=400, height=400):
    """Grid heatmap with a linear grey-blue colour map."""
    v = np.asarray(values, dtype=float)
    vmin, vmax = np.nanmin(v), np.nanmax(v)
    nx, ny = v.shape
    cw, ch = width / nx, height / ny
    cells = []
    for i in range(nx):
        for j in range(ny):
            t = 0.0 if vmax == vmin else (v[i, j] - vmin) / (vmax - vmin)
            r, g, b = int(255 * t), int(255 * t), int(120 + 135 * t)
            cells.append(f'<rect x="{i * cw:.2f}" y="{height - (j + 1) * ch:.2f}" width="{cw + 0.01:.2f}" '
                         f'height="{ch + 0.01:.2f}" style="fill:rgb({r},{g},{b})"/>')
    return f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">' + "".join(cells) + "</svg>"
