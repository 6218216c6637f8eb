"""Wave packets at linearizing scale lambda^{-1/2}, Gabor coefficients and the auxiliary measure."""
import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import BSpline, CubicSpline
from scipy.special import gamma, kv

from . import DomainError, ResolutionError
from .fields import CellField, SampledField2D, SparseSpectrum, sparse_spectrum_of
from .numerics import e, plateau
from .transform import composite_gl

TAU_DROP = 1e-7


def _bspline10():
    # cardinal B-spline of degree 9 on knots -5..5, unit integral
    return BSpline.basis_element(np.arange(-5.0, 6.0), extrapolate=False)


@dataclass
class WavePacketFamily:
    """Mother profile Phi = Psi = Phi1 (x) Phi1 with hat(Phi1) supported in [-1, 1].

    mother='frame': hat(Phi1)(xi) = plateau(2 xi), flat on [-1/2, 1/2].
    mother='spline': Phi1(z) = A sinc(z/5)^10, scaled so |Phi1(z)| <= <z>^-N.
    """
    lam: float
    mother: str = "frame"
    N: int = 10

    def __post_init__(self):
        if self.lam <= 0:
            raise DomainError("lambda must be positive")
        if self.mother not in ("frame", "spline"):
            raise DomainError("mother must be 'frame' or 'spline'")

    @property
    def sqrt_lam(self):
        return float(np.sqrt(self.lam))

    @cached_property
    def spline_amplitude(self):
        z = np.linspace(0.0, 400.0, 400001)
        env = np.abs(np.sinc(z / 5)) ** 10 * (1 + z * z) ** (self.N / 2)
        # beyond z = 400, sinc^10 <z>^10 <= (5/pi)^10 (1 + 1/z^2)^5 < env.max()
        return 1.0 / env.max()

    def phihat(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.mother == "frame":
            return plateau(2.0 * xi, exact=True)
        out = np.nan_to_num(_bspline10()(5.0 * xi))
        return self.spline_amplitude * 5.0 * out

    @cached_property
    def _phi_table(self):
        # trapezoid sums of hat(Phi1) e(xi z) on a 1/256 grid in z via one FFT
        m = 1 << 19
        dxi = 1.0 / 2048
        xi = np.fft.fftfreq(m, 1.0 / (m * dxi))
        vals = np.fft.ifft(self.phihat(xi)).real * m * dxi
        z = np.fft.fftfreq(m, dxi)
        order = np.argsort(z)
        z, vals = z[order], vals[order]
        keep = np.abs(z) <= 600
        return CubicSpline(z[keep], vals[keep])

    def phi(self, z):
        """Spatial profile Phi1 on the line (tabulated Fourier integral for 'frame')."""
        z = np.asarray(z, dtype=float)
        if self.mother == "spline":
            return self.spline_amplitude * np.sinc(z / 5.0) ** 10
        out = np.zeros(z.shape)
        inside = np.abs(z) <= 600
        out[inside] = self._phi_table(z[inside])
        return out

    def chi(self, z):
        return plateau(2.0 * np.asarray(z, dtype=float), exact=True)

    def cells(self, length):
        cells = length * self.sqrt_lam
        P = int(round(cells))
        if abs(cells - P) > 1e-9 or P < 1:
            raise ResolutionError(f"box side {length} * sqrt(lambda) = {cells} is not an integer cell count")
        return P

    def u_bound(self, nyquist=None):
        bound = int(np.floor(3 * self.sqrt_lam))
        if nyquist is not None:
            bound = min(bound, int(np.floor(nyquist / self.sqrt_lam)) + 1)
        return bound


@dataclass
class GaborTensor:
    """Complex Gabor coefficients coeffs[n, p, q] for the frequency pairs uv[n]."""
    lam: float
    P: int
    uv: np.ndarray
    coeffs: np.ndarray
    sigma: tuple = (0, 0)
    tau_drop: float = TAU_DROP
    dropped: np.ndarray = None
    dropped_mass: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def magnitudes(self):
        return np.abs(self.coeffs)

    @cached_property
    def index(self):
        return {(int(u), int(v)): n for n, (u, v) in enumerate(self.uv)}

    def get(self, p, q, u, v):
        n = self.index.get((int(u), int(v)))
        return 0j if n is None else complex(self.coeffs[n, int(p) % self.P, int(q) % self.P])

    def total_mass(self):
        return float(np.sum(np.abs(self.coeffs) ** 2))

    def nnz(self):
        return int(np.count_nonzero(self.coeffs))

    def is_empty(self):
        return self.nnz() == 0

    def entries(self):
        n, p, q = np.nonzero(self.coeffs)
        return self.uv[n, 0], self.uv[n, 1], p, q, np.abs(self.coeffs[n, p, q])

    def write_csv(self, path, extra=None):
        u, v, p, q, mag = self.entries()
        order = np.lexsort((v, u, q, p))
        extra = extra or {}
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["p", "q", "u", "v", "magnitude"] + list(extra))
            for i in order:
                writer.writerow([int(p[i]), int(q[i]), int(u[i]), int(v[i]), "%.12g" % mag[i]]
                                + list(extra.values()))


def _window_pairs(kx, ky, P):
    # (u, v) candidates with |k/P - u| < 1 on each axis
    zx = kx / P
    zy = ky / P
    fx = np.floor(zx).astype(np.int64)
    fy = np.floor(zy).astype(np.int64)
    return zx, zy, fx, fy


def analyze_modes(spec: SparseSpectrum, family, sigma=(0, 0), uv_filter=None):
    """Frequency route: <f, Phi_pquv> = lam^-1/2 sum_k c_k e(k.(p+s/2, q+s/2)/P) hat(Phi1)(k/P - (u,v))."""
    P = family.cells(spec.length)
    kx = np.asarray(spec.kx, dtype=np.int64)
    ky = np.asarray(spec.ky, dtype=np.int64)
    c = np.asarray(spec.coeffs, dtype=complex)
    c = c * e((kx * sigma[0] + ky * sigma[1]) / (2.0 * P)) / family.sqrt_lam
    zx, zy, fx, fy = _window_pairs(kx, ky, P)
    us, vs, vals, res = [], [], [], []
    for du in (0, 1):
        wx = family.phihat(zx - (fx + du))
        for dv in (0, 1):
            wy = family.phihat(zy - (fy + dv))
            amp = c * wx * wy
            keep = amp != 0
            us.append(fx[keep] + du)
            vs.append(fy[keep] + dv)
            vals.append(amp[keep])
            res.append((kx[keep] % P) * P + (ky[keep] % P))
    us = np.concatenate(us)
    vs = np.concatenate(vs)
    vals = np.concatenate(vals)
    res = np.concatenate(res)
    if uv_filter is not None:
        keep = np.array([(a, b) in uv_filter for a, b in zip(us, vs)], dtype=bool) if len(us) else np.zeros(0, bool)
        us, vs, vals, res = us[keep], vs[keep], vals[keep], res[keep]
    if len(us) == 0:
        return GaborTensor(family.lam, P, np.zeros((0, 2), dtype=np.int64), np.zeros((0, P, P), dtype=complex), tuple(sigma))
    pairs, inverse = np.unique(np.stack([us, vs], axis=1), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    flat = inverse * P * P + res
    size = len(pairs) * P * P
    acc = (np.bincount(flat, weights=vals.real, minlength=size)
           + 1j * np.bincount(flat, weights=vals.imag, minlength=size)).reshape(len(pairs), P, P)
    coeffs = np.fft.ifft2(acc, axes=(1, 2)) * P * P
    return GaborTensor(family.lam, P, pairs.astype(np.int64), coeffs, tuple(sigma))


def _sparsify(tensor, tau_drop):
    mags = np.abs(tensor.coeffs)
    peak = mags.max(initial=0.0)
    if peak == 0:
        tensor.coeffs = np.zeros_like(tensor.coeffs)
        tensor.dropped = np.zeros_like(tensor.coeffs)
        return tensor
    low = mags < tau_drop * peak
    tensor.dropped = np.where(low, tensor.coeffs, 0)
    tensor.dropped_mass = float(np.sqrt(np.sum(np.abs(tensor.dropped) ** 2)))
    tensor.coeffs = np.where(low, 0, tensor.coeffs)
    tensor.tau_drop = tau_drop
    return tensor


def gabor_analyze_f(f, lam, family=None, sigma=(0, 0), tau_drop=TAU_DROP):
    family = WavePacketFamily(lam) if family is None else family
    if isinstance(f, CellField):
        tensor = analyze_cells(f, family, sigma)
    else:
        spec = f if isinstance(f, SparseSpectrum) else sparse_spectrum_of(f, tol=1e-15)
        tensor = analyze_modes(spec, family, sigma)
    return _sparsify(tensor, tau_drop)


def analyze_cells(g: CellField, family, sigma=(0, 0), uv_pairs=None):
    """Gabor coefficients of a piecewise-constant cell field for the given (u, v) pairs.

    Uses the exact Fourier coefficients of the step function inside each window.
    """
    P = family.cells(g.length)
    if uv_pairs is None:
        U = family.u_bound()
        uu, vv = np.meshgrid(np.arange(-U, U + 1), np.arange(-U, U + 1), indexing="ij")
        uv_pairs = np.stack([uu.ravel(), vv.ravel()], axis=1)
    uv_pairs = np.asarray(uv_pairs, dtype=np.int64).reshape(-1, 2)
    offs = np.arange(-P + 1, P)
    coeffs = np.zeros((len(uv_pairs), P, P), dtype=complex)
    dft = np.fft.fft2(g.values) / g.n ** 2
    n = g.n
    def axis_factor(u, shift):
        # step-function Fourier factor times the window, for k in the window of u
        k = u * P + offs
        fac = np.sinc(k / n) * np.exp(-1j * np.pi * k / n) * family.phihat(k / P - u)
        return k, fac * e(k * shift / (2.0 * P))

    for idx, (u, v) in enumerate(uv_pairs):
        kx, facx = axis_factor(u, sigma[0])
        ky, facy = axis_factor(v, sigma[1])
        block = dft[np.ix_(kx % n, ky % n)] * np.outer(facx, facy)
        folded = np.zeros((P, P), dtype=complex)
        np.add.at(folded, (np.ix_(kx % P, ky % P)), block)
        coeffs[idx] = np.fft.ifft2(folded) * P * P / family.sqrt_lam
    return GaborTensor(family.lam, P, uv_pairs, coeffs, tuple(sigma))


def periodized_packet_1d(family, z, u, P, images=None):
    """sum_m e(u (z + mP)) Phi1(z + mP)."""
    z = np.asarray(z, dtype=float)
    if images is None:
        images = 2 if family.mother == "spline" else max(2, int(np.ceil(160.0 / P)))
    out = np.zeros(z.shape, dtype=complex)
    for m in range(-images, images + 1):
        zz = z + m * P
        out += e(u * zz) * family.phi(zz)
    return out


def wave_packet_inner(f: SampledField2D, lam, p, q, u, v, family=None, sigma=(0, 0)):
    """Spatial route: grid quadrature of f against the periodized packet."""
    family = WavePacketFamily(lam) if family is None else family
    g = f.grid
    s = family.sqrt_lam
    nyq_x, nyq_y = g.nyquist
    if (abs(u) + 1) * s >= nyq_x:
        raise ResolutionError(f"x axis: packet frequency ({abs(u)}+1)*sqrt(lambda) exceeds Nyquist {nyq_x:g}")
    if (abs(v) + 1) * s >= nyq_y:
        raise ResolutionError(f"y axis: packet frequency ({abs(v)}+1)*sqrt(lambda) exceeds Nyquist {nyq_y:g}")
    P = family.cells(g.nx * g.hx)
    xs, ys = g.axes()
    px = periodized_packet_1d(family, s * xs - p - sigma[0] / 2.0, u, P)
    py = periodized_packet_1d(family, s * ys - q - sigma[1] / 2.0, v, P)
    packet = s * np.outer(px, py)
    return complex(np.sum(f.data * np.conj(packet)) * g.cell_area)


def packet_field(grid, lam, p, q, u, v, family=None, sigma=(0, 0)):
    family = WavePacketFamily(lam) if family is None else family
    s = family.sqrt_lam
    P = family.cells(grid.nx * grid.hx)
    xs, ys = grid.axes()
    px = periodized_packet_1d(family, s * xs - p - sigma[0] / 2.0, u, P)
    py = periodized_packet_1d(family, s * ys - q - sigma[1] / 2.0, v, P)
    return SampledField2D(grid, s * np.outer(px, py))


def packet_spectrum(length, lam, p, q, u, v, family=None, sigma=(0, 0)):
    """Exact Fourier coefficients of the periodized packet on the torus [0, length)^2."""
    family = WavePacketFamily(lam) if family is None else family
    P = family.cells(length)
    offs = np.arange(-P + 1, P)
    kx = u * P + offs
    ky = v * P + offs
    wx = family.phihat(kx / P - u) * e(-kx * (p + sigma[0] / 2.0) / P)
    wy = family.phihat(ky / P - v) * e(-ky * (q + sigma[1] / 2.0) / P)
    coef = np.outer(wx, wy) / (family.sqrt_lam * length ** 2)
    kk_x, kk_y = np.meshgrid(kx, ky, indexing="ij")
    keep = coef != 0
    return SparseSpectrum(kk_x[keep], kk_y[keep], coef[keep], length)


# ---------------------------------------------------------------- modulated set coefficients

def modulated_set_cells(E: CellField, a: CellField, lam, r, w, family):
    s = np.sqrt(lam)
    vals = (np.conj(e(np.real(a.values) * r ** 3 / lam ** 1.5))
            * family.chi(np.real(a.values) / s - w) * np.real(E.values))
    return CellField(vals, E.length)


def gabor_analyze_g_slice(E, a, lam, r, w, family=None, uv_pairs=None, sigma=(0, 0), tau_drop=TAU_DROP):
    family = WavePacketFamily(lam) if family is None else family
    if isinstance(E, CellField):
        g = modulated_set_cells(E, a, lam, r, w, family)
        if not np.any(g.values):
            P = family.cells(E.length)
            return GaborTensor(lam, P, np.zeros((0, 2), np.int64), np.zeros((0, P, P), complex), tuple(sigma),
                               meta={"r": r, "w": w})
        tensor = analyze_cells(g, family, sigma, uv_pairs)
    else:
        s = np.sqrt(lam)
        av = np.real(a.data)
        field_vals = np.conj(e(av * r ** 3 / lam ** 1.5)) * family.chi(av / s - w) * np.real(E.data)
        tensor = analyze_modes(sparse_spectrum_of(E.with_data(field_vals), tol=1e-15), family, sigma,
                               None if uv_pairs is None else {tuple(map(int, x)) for x in uv_pairs})
    tensor.meta = {"r": r, "w": w}
    return _sparsify(tensor, tau_drop)


class LevelSliceProvider:
    """G slices of a cell field a taking finitely many values, via per-level coefficients.

    Gamma_v = coefficients of 1_{E and a = a_v}; G(r, w) = |sum_v conj e(a_v r^3/lam^1.5) chi(a_v/sqrt(lam) - w) Gamma_v|.
    """

    def __init__(self, E: CellField, a: CellField, lam, family=None, uv_pairs=None, sigma=(0, 0)):
        self.family = WavePacketFamily(lam) if family is None else family
        self.lam = lam
        self.sqrt_lam = np.sqrt(lam)
        av = np.real(a.values)
        ev = np.real(E.values)
        self.levels = np.unique(av[ev != 0]) if np.any(ev) else np.zeros(0)
        self.P = self.family.cells(E.length)
        self.uv = np.asarray(uv_pairs, dtype=np.int64).reshape(-1, 2)
        self.gamma = np.zeros((len(self.levels), len(self.uv), self.P, self.P), dtype=complex)
        for i, level in enumerate(self.levels):
            mask = CellField(np.where(av == level, ev, 0.0), E.length)
            self.gamma[i] = analyze_cells(mask, self.family, sigma, self.uv).coeffs
        self.index = {(int(u), int(v)): n for n, (u, v) in enumerate(self.uv)}

    def active_w(self):
        """w values where some level has chi(a_v/sqrt(lam) - w) != 0."""
        ws = set()
        for level in self.levels:
            z = level / self.sqrt_lam
            for w in range(int(np.floor(z)) - 1, int(np.ceil(z)) + 2):
                if self.family.chi(z - w) != 0:
                    ws.add(w)
        return sorted(ws)

    def level_factors(self, r, w):
        return (np.conj(e(self.levels * r ** 3 / self.lam ** 1.5))
                * self.family.chi(self.levels / self.sqrt_lam - w))

    def slice(self, r, w, pair_index=None):
        fac = self.level_factors(r, w)
        live = np.nonzero(fac)[0]
        shape = (len(self.uv) if pair_index is None else len(pair_index), self.P, self.P)
        if len(live) == 0:
            return np.zeros(shape)
        gam = self.gamma[live] if pair_index is None else self.gamma[np.ix_(live, pair_index)]
        return np.abs(np.tensordot(fac[live], gam, axes=(0, 0)))

    @cached_property
    def gamma_norms(self):
        return np.sqrt(np.sum(np.abs(self.gamma) ** 2, axis=(2, 3)))

    def norm_bounds(self, r, w):
        """Per-pair upper bounds for the l2 norm of the (r, w) slice."""
        return np.abs(self.level_factors(r, w)) @ self.gamma_norms


class DirectSliceProvider:
    """G slices recomputed from the modulated set for every (r, w); no level structure assumed."""

    def __init__(self, E: CellField, a: CellField, lam, family=None, uv_pairs=None, sigma=(0, 0)):
        self.family = WavePacketFamily(lam) if family is None else family
        self.E, self.a, self.lam, self.sigma = E, a, lam, sigma
        self.P = self.family.cells(E.length)
        self.uv = np.asarray(uv_pairs, dtype=np.int64).reshape(-1, 2)
        self.index = {(int(u), int(v)): n for n, (u, v) in enumerate(self.uv)}

    def active_w(self):
        z = np.real(self.a.values)[np.real(self.E.values) != 0] / np.sqrt(self.lam)
        if len(z) == 0:
            return []
        ws = np.arange(int(np.floor(z.min())) - 1, int(np.ceil(z.max())) + 2)
        return [int(w) for w in ws if np.any(self.family.chi(z - w) != 0)]

    def slice(self, r, w, pair_index=None):
        uv = self.uv if pair_index is None else self.uv[pair_index]
        g = modulated_set_cells(self.E, self.a, self.lam, r, w, self.family)
        return np.abs(analyze_cells(g, self.family, self.sigma, uv).coeffs)

    def norm_bounds(self, r, w):
        return np.sqrt(np.sum(self.slice(r, w) ** 2, axis=(1, 2)))


# ---------------------------------------------------------------- auxiliary measure

def weight_constant(N):
    """c_N = (int <z>^-N dz)^2."""
    one_d = np.sqrt(np.pi) * gamma((N - 1) / 2.0) / gamma(N / 2.0)
    return one_d ** 2


def _axis_weights(P, n, N, images=2, nodes=16):
    """W[p, c] = int over cell c (z units, width P/n) of sum_m <z - p + mP>^-N dz."""
    width = P / n
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    z = (np.arange(n)[:, None] + 0.5 + 0.5 * gx[None, :]) * width   # cell nodes
    wts = 0.5 * gw * width
    out = np.zeros((P, n))
    for p in range(P):
        acc = np.zeros_like(z)
        for m in range(-images, images + 1):
            acc += (1 + (z - p + m * P) ** 2) ** (-N / 2.0)
        out[p] = acc @ wts
    return out


def _grid_axis_weights(P, xs_z, N, images=2):
    out = np.zeros((P, len(xs_z)))
    for p in range(P):
        acc = np.zeros(len(xs_z))
        for m in range(-images, images + 1):
            acc += (1 + (xs_z - p + m * P) ** 2) ** (-N / 2.0)
        out[p] = acc
    return out


def mu_all(S, lam, N=10):
    """mu_{p,q}(S) for every cell (p, q) of the torus, as a P x P array."""
    s = np.sqrt(lam)
    if isinstance(S, CellField):
        P = int(round(S.length * s))
        wx = _axis_weights(P, S.n, N) / s
        return wx @ np.real(S.values) @ wx.T
    g = S.grid
    P = int(round(g.nx * g.hx * s))
    xs, ys = g.axes()
    wx = _grid_axis_weights(P, s * xs, N) * g.hx
    wy = _grid_axis_weights(P, s * ys, N) * g.hy
    return wx @ np.real(S.data) @ wy.T


def mu_measure(p, q, S, lam, N=10):
    return float(mu_all(S, lam, N)[int(p), int(q)])


def f_local_norms(spec: SparseSpectrum, lam, N=10):
    """||f||_{L^2(d mu_{p,q})} for all cells, from the Fourier series of |f|^2.

    int e(kappa x) mu-weight dx = lam^-1/2 e(kappa p / sqrt(lam)) What(kappa / sqrt(lam)),
    What the Fourier transform of <z>^-N (a Matern profile).
    """
    s = np.sqrt(lam)
    P = int(round(spec.length * s))
    c = np.asarray(spec.coeffs)
    dkx = np.subtract.outer(spec.kx, spec.kx)
    dky = np.subtract.outer(spec.ky, spec.ky)
    prod = np.outer(c, np.conj(c))
    wx = _weight_hat(dkx / spec.length / s, N)
    wy = _weight_hat(dky / spec.length / s, N)
    amp = prod * wx * wy / lam
    keep = np.abs(amp) > 1e-18 * np.abs(amp).max()
    amp = amp[keep]
    rx = dkx[keep] % P
    ry = dky[keep] % P
    acc = np.zeros((P, P), dtype=complex)
    np.add.at(acc, (rx, ry), amp)
    vals = np.real(np.fft.ifft2(acc) * P * P)
    return np.sqrt(np.maximum(vals, 0.0))


def _weight_hat(zeta, N):
    """Fourier transform of (1 + z^2)^(-N/2) at zeta."""
    zeta = np.abs(np.asarray(zeta, dtype=float))
    nu = (N - 1) / 2.0
    out = np.empty(zeta.shape)
    zero = zeta == 0
    out[zero] = np.sqrt(np.pi) * gamma(nu) / gamma(N / 2.0)
    zz = 2 * np.pi * zeta[~zero]
    out[~zero] = 2 * np.pi ** (N / 2.0) * zeta[~zero] ** nu * kv(nu, zz) / gamma(N / 2.0)
    return out
