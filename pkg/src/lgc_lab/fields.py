"""Sampled fields on periodic grids, dyadic spectral projections and maximal operators."""
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from . import ResolutionError
from .numerics import lp_window

RASTER_MAGIC = b"OSC1"


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    hx: float
    hy: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if n < 1 or n & (n - 1):
                raise ValueError("sample counts must be powers of two")
        if not (self.hx > 0 and self.hy > 0):
            raise ValueError("spacings must be positive")

    @classmethod
    def centered(cls, n, length, ny=None, length_y=None):
        ny = n if ny is None else ny
        length_y = length if length_y is None else length_y
        return cls(n, ny, length / n, length_y / ny, -length / 2, -length_y / 2)

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def lengths(self):
        return self.nx * self.hx, self.ny * self.hy

    @property
    def cell_area(self):
        return self.hx * self.hy

    @property
    def nyquist(self):
        return 0.5 / self.hx, 0.5 / self.hy

    def axes(self):
        return (self.x0 + self.hx * np.arange(self.nx),
                self.y0 + self.hy * np.arange(self.ny))

    def mesh(self):
        xs, ys = self.axes()
        return np.meshgrid(xs, ys, indexing="ij")

    def frequencies(self):
        return np.fft.fftfreq(self.nx, self.hx), np.fft.fftfreq(self.ny, self.hy)


@dataclass(frozen=True)
class SampledField2D:
    grid: Grid2D
    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.shape != self.grid.shape:
            raise ValueError(f"data shape {arr.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field samples must be finite")

    @classmethod
    def from_function(cls, grid, func):
        xx, yy = grid.mesh()
        return cls(grid, np.asarray(func(xx, yy), dtype=complex))

    def norm2(self):
        return float(np.sqrt(np.sum(np.abs(self.data) ** 2) * self.grid.cell_area))

    def with_data(self, data):
        return SampledField2D(self.grid, data)


def l2_norm(f):
    return f.norm2()


def spectrum(f):
    """Fourier coefficients so that f = sum c e(k.x) over the torus."""
    return np.fft.fft2(f.data) / (f.grid.nx * f.grid.ny)


def spectral_multiply(f, mult):
    return f.with_data(np.fft.ifft2(np.fft.fft2(f.data) * mult))


def spectral_project(f, k, j1, j2):
    g = f.grid
    nyq_x, nyq_y = g.nyquist
    if 2.0 ** (k + j1 + 1) > nyq_x:
        raise ResolutionError(f"x axis: window edge 2^{k + j1 + 1} exceeds Nyquist {nyq_x:g}")
    if 2.0 ** (2 * k + j2 + 1) > nyq_y:
        raise ResolutionError(f"y axis: window edge 2^{2 * k + j2 + 1} exceeds Nyquist {nyq_y:g}")
    fx, fy = g.frequencies()
    mult = np.outer(lp_window(k, j1, fx), lp_window(2 * k, j2, fy))
    return spectral_multiply(f, mult)


def _box_sum_1d(arr, r, axis):
    # periodic centred window sum of width 2r+1 along axis
    if r == 0:
        return arr.copy()
    n = arr.shape[axis]
    zero = np.zeros_like(np.take(arr, [0], axis=axis))
    padded = np.concatenate([zero, np.take(arr, range(n - r, n), axis=axis), arr,
                             np.take(arr, range(0, r), axis=axis)], axis=axis)
    cs = np.cumsum(padded, axis=axis)
    # cs[i + 2r + 1] - cs[i] sums original indices i - r .. i + r
    hi = np.take(cs, range(2 * r + 1, 2 * r + 1 + n), axis=axis)
    lo = np.take(cs, range(0, n), axis=axis)
    return hi - lo


def dyadic_radii(n):
    """Half-widths {0, 1, 2, 4, ...} whose centred windows fit inside the period."""
    radii = [0]
    r = 1
    while 2 * r + 1 <= n:
        radii.append(r)
        r *= 2
    return radii


def maximal_strong(f):
    absf = np.abs(np.asarray(f.data))
    radii_x = dyadic_radii(f.grid.nx)
    radii_y = dyadic_radii(f.grid.ny)
    out = absf.copy()
    for rx in radii_x:
        sx = _box_sum_1d(absf, rx, 0)
        for ry in radii_y:
            avg = _box_sum_1d(sx, ry, 1) / ((2 * rx + 1) * (2 * ry + 1))
            np.maximum(out, avg, out=out)
    return f.with_data(out.astype(complex))


def maximal_strong_bruteforce(f):
    """All centred dyadic rectangles by explicit loops (test oracle)."""
    absf = np.abs(np.asarray(f.data))
    nx, ny = absf.shape
    out = np.zeros_like(absf)
    for i in range(nx):
        for j in range(ny):
            best = 0.0
            for rx in dyadic_radii(nx):
                ix = np.arange(i - rx, i + rx + 1) % nx
                for ry in dyadic_radii(ny):
                    iy = np.arange(j - ry, j + ry + 1) % ny
                    best = max(best, absf[np.ix_(ix, iy)].mean())
            out[i, j] = best
    return out


@njit(cache=True)
def _bilinear_shift(arr, dxi, dyi, out, weight):
    # out += weight * arr sampled at (i + dxi, j + dyi), periodic
    nx, ny = arr.shape
    fx = np.floor(dxi)
    fy = np.floor(dyi)
    ax = dxi - fx
    ay = dyi - fy
    ox = int(fx) % nx
    oy = int(fy) % ny
    w00 = (1 - ax) * (1 - ay) * weight
    w10 = ax * (1 - ay) * weight
    w01 = (1 - ax) * ay * weight
    w11 = ax * ay * weight
    for i in range(nx):
        i0 = (i + ox) % nx
        i1 = (i0 + 1) % nx
        for j in range(ny):
            j0 = (j + oy) % ny
            j1 = (j0 + 1) % ny
            out[i, j] += (w00 * arr[i0, j0] + w10 * arr[i1, j0]
                          + w01 * arr[i0, j1] + w11 * arr[i1, j1])


def parabola_sample(arr, grid, tx, ty, weight=1.0, out=None):
    """Accumulate weight * arr(x - tx, y - ty) by periodic bilinear interpolation."""
    if out is None:
        out = np.zeros_like(arr)
    _bilinear_shift(arr, -tx / grid.hx, -ty / grid.hy, out, weight)
    return out


def parabola_step(grid):
    return min(grid.hx, np.sqrt(grid.hy)) / 4.0


def parabola_ladder(grid, r_max=None):
    """Dyadic truncation radii R_k = 2^k min(hx, sqrt(hy)) up to r_max."""
    base = min(grid.hx, np.sqrt(grid.hy))
    if r_max is None:
        r_max = grid.lengths[0] / 2
    ladder = []
    radius = base
    while radius <= r_max * (1 + 1e-12):
        ladder.append(radius)
        radius *= 2
    return ladder


def maximal_parabola(f, r_max=None):
    g = f.grid
    absf = np.ascontiguousarray(np.abs(f.data))
    step = parabola_step(g)
    ladder = parabola_ladder(g, r_max)
    out = absf.copy()
    acc = np.zeros_like(absf)
    node = 0
    for radius in ladder:
        n_nodes = int(round(radius / step))
        while node < n_nodes:
            t = (node + 0.5) * step
            parabola_sample(absf, g, t, t * t, step, acc)
            parabola_sample(absf, g, -t, t * t, step, acc)
            node += 1
        np.maximum(out, acc / (2 * radius), out=out)
    return f.with_data(out.astype(complex))


def hilbert_star_parabola(f, r_max=None):
    g = f.grid
    step = parabola_step(g)
    ladder = parabola_ladder(g, r_max)
    data = np.ascontiguousarray(f.data, dtype=complex)
    levels = _pv_cumulative(data, g, ladder, step)
    # sup over rung pairs r < R of |S(R) - S(r)|, S(0) = 0 included
    out = np.zeros(data.shape)
    for a in range(len(levels)):
        for b in range(a + 1, len(levels)):
            np.maximum(out, np.abs(levels[b] - levels[a]), out=out)
    return f.with_data(out.astype(complex))


def _pv_cumulative(data, g, ladder, step):
    # paired +-t nodes: [f(x-t, y-t^2) - f(x+t, y-t^2)] * step / t
    acc = np.zeros_like(data)
    levels = [acc.copy()]
    node = 0
    for radius in ladder:
        n_nodes = int(round(radius / step))
        while node < n_nodes:
            t = (node + 0.5) * step
            parabola_sample(data, g, t, t * t, step / t, acc)
            parabola_sample(data, g, -t, t * t, -step / t, acc)
            node += 1
        levels.append(acc.copy())
    return levels


def write_raster(path, f):
    g = f.grid
    samples = np.empty((g.nx * g.ny, 2), dtype="<f8")
    flat = np.asarray(f.data, dtype=complex).reshape(-1)
    samples[:, 0] = flat.real
    samples[:, 1] = flat.imag
    with open(path, "wb") as fh:
        fh.write(RASTER_MAGIC)
        fh.write(struct.pack("<II4d", g.nx, g.ny, g.hx, g.hy, g.x0, g.y0))
        fh.write(samples.tobytes())


def read_raster(path):
    with open(path, "rb") as fh:
        if fh.read(4) != RASTER_MAGIC:
            raise ValueError("not an OSC1 raster")
        nx, ny, hx, hy, x0, y0 = struct.unpack("<II4d", fh.read(40))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * nx * ny:
        raise ValueError("truncated raster")
    data = (raw[0::2] + 1j * raw[1::2]).reshape(nx, ny)
    return SampledField2D(Grid2D(nx, ny, hx, hy, x0, y0), data)


@dataclass(frozen=True)
class SparseSpectrum:
    """f(x, y) = sum_n coeffs[n] e((kx[n] x + ky[n] y) / length) on the torus [0, length)^2."""
    kx: np.ndarray
    ky: np.ndarray
    coeffs: np.ndarray
    length: float

    def norm2(self):
        return float(self.length * np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
        for kx, ky, c in zip(self.kx, self.ky, self.coeffs):
            out += c * np.exp(2j * np.pi * (kx * x + ky * y) / self.length)
        return out

    def to_field(self, grid):
        return SampledField2D.from_function(grid, self.evaluate)


def sparse_spectrum_of(f, tol=0.0):
    """Absolute Fourier coefficients of a sampled field (origin phase removed)."""
    g = f.grid
    if g.nx * g.hx != g.ny * g.hy:
        raise ValueError("sparse spectra need a square torus")
    length = g.nx * g.hx
    c = spectrum(f)
    kx = np.rint(np.fft.fftfreq(g.nx, 1.0 / g.nx)).astype(np.int64)
    ky = np.rint(np.fft.fftfreq(g.ny, 1.0 / g.ny)).astype(np.int64)
    c = c * np.exp(-2j * np.pi * (np.add.outer(kx * g.x0, ky * g.y0)) / length)
    keep = np.abs(c) > tol * (np.abs(c).max() if c.size else 0)
    ix, iy = np.nonzero(keep)
    return SparseSpectrum(kx[ix], ky[iy], c[ix, iy], length)


@dataclass(frozen=True)
class CellField:
    """Piecewise-constant function on an n x n partition of the torus [0, length)^2."""
    values: np.ndarray
    length: float

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def h(self):
        return self.length / self.n

    def measure(self):
        return float(np.sum(np.real(self.values)) * self.h ** 2)

    def norm2(self):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)) * self.h)

    def to_field(self, refine):
        """Sample on a grid with `refine` points per cell (cell-centred samples)."""
        data = np.kron(self.values, np.ones((refine, refine)))
        n = self.n * refine
        h = self.length / n
        return SampledField2D(Grid2D(n, n, h, h, 0.5 * h, 0.5 * h), data.astype(complex))

    def fourier_coeffs(self, kx, ky):
        """Exact Fourier coefficients c_k = length^-2 int g e(-k.x/length) at integer k."""
        n = self.n
        dft = np.fft.fft2(self.values) / n ** 2
        kx = np.asarray(kx)
        ky = np.asarray(ky)
        sx = np.sinc(kx / n) * np.exp(-1j * np.pi * kx / n)
        sy = np.sinc(ky / n) * np.exp(-1j * np.pi * ky / n)
        return dft[np.ix_(kx % n, ky % n)] * np.outer(sx, sy)
