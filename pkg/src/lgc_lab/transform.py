"""Carleson-Radon transform along monomial curves, its multiplier and dyadic decomposition."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize

from . import AccuracyError, ConfigError, DomainError, ResourceError
from .fields import SampledField2D, parabola_ladder, parabola_sample, parabola_step
from .numerics import e, lp_window, plateau, rho as rho_profile, ring

C_CLS = 8.0
GL_ORDER = 16
NODES_PER_CYCLE = 8
SPATIAL_BUDGET = 4e9        # node-pixel products allowed in spatial quadrature
MAX_LEVELS = 512            # distinct a values handled by the spectral route

_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


@dataclass(frozen=True)
class CurveExponents:
    alpha1: float = 1.0
    alpha2: float = 2.0
    alpha3: float = 3.0
    sign_convention: str = "signed"

    def __post_init__(self):
        al = (self.alpha1, self.alpha2, self.alpha3)
        if min(al) <= 0:
            raise ConfigError("curve exponents must be positive")
        for i in range(3):
            for k in range(i + 1, 3):
                if abs(al[i] - al[k]) <= 1e-9:
                    raise ConfigError("resonant configuration unsupported")
        if self.sign_convention not in ("signed", "absolute"):
            raise ConfigError("sign_convention must be 'signed' or 'absolute'")

    def power(self, t, alpha):
        t = np.asarray(t, dtype=float)
        if float(alpha).is_integer():
            return t ** int(alpha)
        mag = np.abs(t) ** alpha
        return np.sign(t) * mag if self.sign_convention == "signed" else mag


@dataclass(frozen=True)
class FreqIndex:
    k: int
    j: tuple

    def __post_init__(self):
        if len(self.j) != 3 or min(self.j) < 0:
            raise DomainError("j must be a triple of naturals")

    @property
    def jmax(self):
        return max(self.j)


def composite_gl(lo, hi, n_panels):
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


def _panels_for(cycles, lo, hi):
    return int(np.ceil(NODES_PER_CYCLE * cycles / GL_ORDER)) + 4


def _phase_cycles(a, eta, xi, lo, hi):
    return (abs(a) * (hi ** 3 - lo ** 3) + abs(eta) * (hi ** 2 - lo ** 2)
            + abs(xi) * (hi - lo))


def _paired_sum(t, w, kernel, a, eta, xi):
    # kernel odd in t: pair +t with -t so the odd part cancels exactly
    plus = e(a * t ** 3 - eta * t ** 2 - xi * t)
    minus = e(-a * t ** 3 - eta * t ** 2 + xi * t)
    return np.sum(w * kernel * (plus - minus))


def symbol_integral(xi, eta, a, rtol=1e-9, max_doublings=8, lo=0.5, hi=2.0):
    """Int e(a t^3 - eta t^2 - xi t) psi(t)/t dt over 1/2 <= |t| <= 2."""
    for v in (xi, eta, a):
        if not np.isfinite(v):
            raise DomainError("symbol arguments must be finite")
    cycles = _phase_cycles(a, eta, xi, lo, hi)
    panels = _panels_for(cycles, lo, hi)
    # magnitude scale for the roundoff floor
    t, w = composite_gl(lo, hi, 64)
    mass = 2 * np.sum(w * np.abs(ring(t, exact=True) / t))

    def estimate(n_panels):
        total = 0j
        chunk = 1 << 14
        edges = np.linspace(lo, hi, n_panels + 1)
        for s in range(0, n_panels, chunk):
            sub = edges[s:min(s + chunk, n_panels) + 1]
            tt, ww = composite_gl(sub[0], sub[-1], len(sub) - 1)
            total += _paired_sum(tt, ww, ring(tt, exact=True) / tt, a, eta, xi)
        return total

    prev = cur = estimate(panels)
    for _ in range(max_doublings):
        panels *= 2
        cur = estimate(panels)
        delta = abs(cur - prev)
        if delta <= rtol * abs(cur) or delta <= 1e-13 * mass:
            return cur
        prev = cur
    raise AccuracyError("oscillatory quadrature did not converge", estimate=cur)


def symbol_m(j, xi, eta, a, rtol=1e-9):
    j1, j2, j3 = j
    if j3 < 1:
        raise DomainError("symbol_m needs j3 >= 1; j3 = 0 is the low-frequency convention")
    window = float(lp_window(0, j1, xi, exact=True) * lp_window(0, j2, eta, exact=True))
    if window == 0.0 or not (2.0 ** j3 <= a < 2.0 ** (j3 + 1)):
        return 0j
    return window * symbol_integral(xi, eta, a, rtol)


# ---------------------------------------------------------------- index partition

def _support_interval(j):
    # hull of {xi >= 0 : lp_window(0, j, xi) != 0}
    return (0.0, 2.0) if j == 0 else (2.0 ** (j - 1), 2.0 ** (j + 1))


def _dist_to_support(g, j):
    lo, hi = _support_interval(j)
    absg = np.abs(g)
    if j == 0:
        return np.maximum(absg - hi, 0.0)
    return np.maximum(np.maximum(lo - absg, absg - hi), 0.0)


def _eta_points(s, j2):
    # normalized coordinate s in [-1, 1] mapped onto the signed eta support
    lo, hi = _support_interval(j2)
    mag = lo + (hi - lo) * np.abs(s)
    return np.sign(s) * mag if j2 > 0 else hi * s


def stationarity_gap(j, resolution=2.0 ** -6):
    """inf |3 a t^2 - 2 eta t - xi| over the support set of the index class."""
    j1, j2, j3 = j
    n = int(round(1 / resolution)) + 1
    ts = np.concatenate([-np.linspace(2.0, 0.5, n), np.linspace(0.5, 2.0, n)])
    ss = np.linspace(-1.0, 1.0, 2 * n - 1)
    etas = _eta_points(ss, j2)
    amags = 2.0 ** j3 * (1 + np.linspace(0.0, 1.0, n))
    avals = np.concatenate([-amags[::-1], amags])
    tt, ee, aa = np.meshgrid(ts, etas, avals, indexing="ij")
    gap = _dist_to_support(3 * aa * tt ** 2 - 2 * ee * tt, j1)
    best = float(gap.min())
    if best == 0.0:
        return 0.0

    def objective(z):
        t = np.clip(z[0], 0.5, 2.0) * np.sign(z[0] if z[0] != 0 else 1.0)
        s = np.clip(z[1], -1.0, 1.0)
        amag = 2.0 ** j3 * (1 + np.clip(abs(z[2]), 0.0, 1.0))
        av = np.sign(z[2] if z[2] != 0 else 1.0) * amag
        return float(_dist_to_support(3 * av * t ** 2 - 2 * _eta_points(np.array(s), j2) * t, j1))

    flat = np.argpartition(gap, 5, axis=None)[:5]
    for idx in flat[np.argsort(gap.ravel()[flat])]:
        it, ie, ia = np.unravel_index(idx, gap.shape)
        sgn_a = np.sign(avals[ia])
        z0 = [ts[it], ss[ie], sgn_a * (abs(avals[ia]) / 2.0 ** j3 - 1 + 1e-12)]
        res = minimize(objective, z0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400})
        best = min(best, float(res.fun))
    return best


@lru_cache(maxsize=None)
def classify_index(j, c_cls=C_CLS):
    j = tuple(int(v) for v in j)
    if j[2] == 0:
        return "J0"
    if 2.0 ** max(j) <= c_cls:
        return "Jns"    # any gap >= 0 meets the threshold
    gap = stationarity_gap(j)
    return "Jns" if 2.0 ** max(j) <= c_cls * (1 + gap) else "Js"


# ---------------------------------------------------------------- curve multipliers

def _kernel_nodes(kernel, lo, hi, max_freq):
    """Composite GL nodes on [-hi,-lo] u [lo,hi], panels graded over dyadic pieces."""
    cuts = [lo]
    while cuts[-1] * 2 < hi * (1 - 1e-12):
        cuts.append(cuts[-1] * 2)
    cuts.append(hi)
    ts, ws = [], []
    for left, right in zip(cuts[:-1], cuts[1:]):
        t, w = composite_gl(left, right, _panels_for(max_freq * (right - left), left, right))
        ts.append(t)
        ws.append(w)
    t = np.concatenate(ts)
    w = np.concatenate(ws)
    t = np.concatenate([-t[::-1], t])
    w = np.concatenate([w[::-1], w])
    return t, w * kernel(t)


def curve_multiplier(xis, etas, avals, kernel, lo, hi, chunk=4096):
    """M[v, i, l] = int kernel(t) e(a_v t^3 - xi_i t - eta_l t^2) dt over lo <= |t| <= hi."""
    xis = np.asarray(xis, dtype=float)
    etas = np.asarray(etas, dtype=float)
    avals = np.atleast_1d(np.asarray(avals, dtype=float))
    fmax = (np.max(np.abs(xis), initial=0) + 2 * hi * np.max(np.abs(etas), initial=0)
            + 3 * hi * hi * np.max(np.abs(avals), initial=0))
    t, w = _kernel_nodes(kernel, lo, hi, fmax + 4.0 / (hi - lo))
    keep = w != 0
    t, w = t[keep], w[keep]
    out = np.zeros((len(avals), len(xis), len(etas)), dtype=complex)
    for s in range(0, len(t), chunk):
        ts = t[s:s + chunk]
        ws = w[s:s + chunk]
        ax = e(-np.outer(xis, ts))
        by = e(-np.outer(ts ** 2, etas))
        cub = e(np.outer(avals, ts ** 3)) * ws[None, :]
        for v in range(len(avals)):
            out[v] += (ax * cub[v][None, :]) @ by
    return out


def ring_kernel(k):
    scale = 2.0 ** k
    return (lambda t: ring(scale * t, exact=True) / t), 2.0 ** (-k - 1), 2.0 ** (1 - k)


def truncated_kernel(k_lo, k_hi):
    """[phi(2^k_lo t) - phi(2^(k_hi+1) t)]/t, the telescoped sum of ring pieces."""
    def kern(t):
        return (plateau(2.0 ** k_lo * t, exact=True) - plateau(2.0 ** (k_hi + 1) * t, exact=True)) / t
    return kern, 2.0 ** (-k_hi - 2), 2.0 ** (1 - k_lo)


def _active_bins(fhat, window, tol=1e-15):
    mass = np.abs(fhat) * (window != 0)
    peak = mass.max()
    if peak == 0:
        return np.array([], dtype=int), np.array([], dtype=int)
    keep = mass > tol * peak
    return np.nonzero(keep.any(axis=1))[0], np.nonzero(keep.any(axis=0))[0]


def _level_values(a):
    vals = np.real(np.asarray(a.data if isinstance(a, SampledField2D) else a))
    levels, inverse = np.unique(vals, return_inverse=True)
    return levels, inverse.reshape(vals.shape)


def apply_kernel_spectral(f, a, kernel, lo, hi, window=None, levels_mask=None, cache=None, tag=None):
    """Sum over a-levels of mask_v * IFFT(fhat * window * M(., ., a_v)).

    cache: optional dict reused across inputs sharing a and kernel; tag names the kernel in its keys.
    """
    g = f.grid
    fhat = np.fft.fft2(f.data)
    if window is None:
        window = np.ones(g.shape)
    levels, inverse = _level_values(a)
    if len(levels) > MAX_LEVELS:
        raise ResourceError("too many distinct a values for the spectral route")
    fx, fy = g.frequencies()
    ix, iy = _active_bins(fhat, window)
    out = np.zeros(g.shape, dtype=complex)
    if len(ix) == 0:
        return f.with_data(out)
    use = range(len(levels)) if levels_mask is None else np.nonzero(levels_mask)[0]
    use = [v for v in use if np.any(inverse == v)]
    if not use:
        return f.with_data(out)
    if cache is None:
        mult = curve_multiplier(fx[ix], fy[iy], levels[use], kernel, lo, hi)
    else:
        key = (tag, lo, hi, levels[use].tobytes(), fx[ix].tobytes(), fy[iy].tobytes())
        if key not in cache:
            cache[key] = curve_multiplier(fx[ix], fy[iy], levels[use], kernel, lo, hi)
        mult = cache[key]
    sub = fhat[np.ix_(ix, iy)] * window[np.ix_(ix, iy)]
    for n, v in enumerate(use):
        spec = np.zeros(g.shape, dtype=complex)
        spec[np.ix_(ix, iy)] = sub * mult[n]
        vals = np.fft.ifft2(spec)
        sel = inverse == v
        out[sel] = vals[sel]
    return f.with_data(out)


def apply_kernel_spatial(f, a, kernel, lo, hi, window=None, mask=None, step=None):
    """Midpoint quadrature in t with Fourier-interpolated curve shifts."""
    g = f.grid
    fhat = np.fft.fft2(f.data)
    if window is not None:
        fhat = fhat * window
    avals = np.real(np.asarray(a.data)) if isinstance(a, SampledField2D) else np.full(g.shape, float(a))
    fx, fy = g.frequencies()
    ix, iy = _active_bins(fhat, np.ones(g.shape))
    out = np.zeros(g.shape, dtype=complex)
    if len(ix) == 0:
        return f.with_data(out)
    amax = float(np.max(np.abs(avals if mask is None else avals[mask]), initial=0.0))
    fmax = np.max(np.abs(fx[ix])) + 2 * hi * np.max(np.abs(fy[iy])) + 3 * hi * hi * amax
    if step is None:
        step = min(g.hx, 1.0 / (8 * max(amax, 1e-300)), 1.0 / (2 * fmax + 160.0 / (hi - lo)))
    n_nodes = int(np.ceil((hi - lo) / step))
    step = (hi - lo) / n_nodes
    if 2 * n_nodes * g.nx * g.ny > SPATIAL_BUDGET:
        raise ResourceError(f"spatial quadrature needs {2 * n_nodes} nodes; step underflow")
    fxx, fyy = np.meshgrid(fx, fy, indexing="ij")
    for sign in (1.0, -1.0):
        for i in range(n_nodes):
            t = sign * (lo + (i + 0.5) * step)
            weight = kernel(np.array([t]))[0]
            if weight == 0:
                continue
            shifted = np.fft.ifft2(fhat * e(-fxx * t - fyy * t * t))
            out += step * weight * e(avals * t ** 3) * shifted
    if mask is not None:
        out = np.where(mask, out, 0)
    return f.with_data(out)


def unit_scale_apply(f, a, profile=None, route="spatial"):
    """int f(x-t, y-t^2) e(a(x,y) t^3) rho(t) dt."""
    if f.grid != a.grid:
        raise DomainError("f and a must share a grid")
    if np.any(np.abs(np.imag(a.data)) > 0):
        raise DomainError("a must be real valued")
    kern = (lambda t: rho_profile(t, exact=True)) if profile is None else profile
    # rho lives on (1/2, 2); the negative half-line contributes nothing
    if route == "spectral":
        return apply_kernel_spectral(f, a, lambda t: kern(t) * (t > 0), 0.5, 2.0)
    return apply_kernel_spatial(f, a, lambda t: kern(t) * (t > 0), 0.5, 2.0)


# ---------------------------------------------------------------- decomposition

def j3_of(aval, k):
    """Dyadic band of |a| at scale k: 0 for |a| < 2^(3k+1), else floor(log2|a|) - 3k."""
    mag = abs(aval)
    if mag < 2.0 ** (3 * k + 1):
        return 0
    return int(np.floor(np.log2(mag))) - 3 * k


def j_caps(grid, k):
    """Smallest (J1, J2) with 2^(k+J1), 2^(2k+J2) beyond Nyquist, so windows telescope to 1."""
    nyq_x, nyq_y = grid.nyquist
    j1 = max(0, int(np.ceil(np.log2(nyq_x))) - k)
    j2 = max(0, int(np.ceil(np.log2(nyq_y))) - 2 * k)
    return j1, j2


def _selected_window(grid, k, j3, part, caps):
    fx, fy = grid.frequencies()
    wx = [lp_window(k, j1, fx) for j1 in range(caps[0] + 1)]
    wy = [lp_window(2 * k, j2, fy) for j2 in range(caps[1] + 1)]
    win = np.zeros(grid.shape)
    for j1 in range(caps[0] + 1):
        for j2 in range(caps[1] + 1):
            j = (j1, j2, j3)
            if isinstance(part, tuple):
                hit = j == part
            elif part == "all":
                hit = True
            else:
                cls = classify_index(j)
                hit = {"L": "J0", "HNS": "Jns", "HS": "Js"}[part] == cls
            if hit:
                win += np.outer(wx[j1], wy[j2])
    return win


def decompose_apply(f, a, part, k_range, j_cap=None, route="spectral", cache=None):
    """Sum of C_{j,k} f over j in the selected class and k in k_range.

    part: 'L', 'HNS', 'HS', 'all', or an explicit triple j.
    j_cap: optional (J1, J2, J3); defaults reach Nyquist and sup|a|.
    cache: optional multiplier cache shared across calls with the same a (spectral route).
    """
    g = f.grid
    levels, inverse = _level_values(a)
    out = np.zeros(g.shape, dtype=complex)
    for k in k_range:
        caps = j_caps(g, k) if j_cap is None else tuple(j_cap[:2])
        j3_cap = None if j_cap is None else j_cap[2]
        kern, lo, hi = ring_kernel(k)
        j3_levels = np.array([j3_of(v, k) for v in levels])
        for j3 in np.unique(j3_levels):
            if j3_cap is not None and j3 > j3_cap:
                continue
            if isinstance(part, tuple) and part[2] != j3:
                continue
            win = _selected_window(g, k, int(j3), part, caps)
            if not np.any(win):
                continue
            if route == "spectral":
                piece = apply_kernel_spectral(f, a, kern, lo, hi, window=win,
                                              levels_mask=j3_levels == j3, cache=cache, tag=("ring", k))
            else:
                mask = j3_levels[inverse] == j3
                piece = apply_kernel_spatial(f, a, kern, lo, hi, window=win, mask=mask)
            out += piece.data
    return f.with_data(out)


def truncated_apply(f, a, k_range, route="spectral"):
    """The undecomposed operator with kernel sum_k psi(2^k t)/t over k_range."""
    kern, lo, hi = truncated_kernel(min(k_range), max(k_range))
    if route == "spectral":
        return apply_kernel_spectral(f, a, kern, lo, hi)
    return apply_kernel_spatial(f, a, kern, lo, hi)


def low_part_summed(f, a, k_range):
    """C_L via summation by parts: kernel [phi(2^k0 t) - phi(2^(kmax+1) t)]/t per level,

    k0 the first scale in range whose low cell holds |a|.
    """
    levels, inverse = _level_values(a)
    k_lo, k_hi = min(k_range), max(k_range)
    out = np.zeros(f.grid.shape, dtype=complex)
    k0s = []
    for v in levels:
        k0 = k_lo
        while k0 <= k_hi and abs(v) >= 2.0 ** (3 * k0 + 1):
            k0 += 1
        k0s.append(k0)
    for k0 in sorted(set(k0s)):
        if k0 > k_hi:
            continue
        sel = np.array([kk == k0 for kk in k0s])
        kern, lo, hi = truncated_kernel(k0, k_hi)
        out += apply_kernel_spectral(f, a, kern, lo, hi, levels_mask=sel).data
    return f.with_data(out)


# ---------------------------------------------------------------- Carleson-Radon

def default_a_grid(band_lo, band_hi):
    vals = []
    k = int(np.floor(np.log2(band_lo)))
    while 2.0 ** k <= band_hi:
        for m in (1.0, 1.25, 1.5, 1.75):
            v = m * 2.0 ** k
            if band_lo <= v <= band_hi:
                vals.append(v)
        k += 1
    return vals


def carleson_radon_apply(f, alpha=None, a_grid=(0.0,), r_min=None, r_max=None):
    """max over a in a_grid of |sum over paired nodes r < t <= R of
    [f(x - t^a1, y - t^a2) e(a t^a3) - f(x - (-t)^a1, y - (-t)^a2) e(a (-t)^a3)] step/t|.
    """
    alpha = CurveExponents() if alpha is None else alpha
    a_grid = [float(v) for v in a_grid]
    if not a_grid or not all(np.isfinite(a_grid)):
        raise DomainError("a_grid must be a nonempty list of finite reals")
    g = f.grid
    ladder = parabola_ladder(g, r_max)
    r_lo = 0.0 if r_min is None else r_min
    r_hi = ladder[-1] if r_max is None else r_max
    base = parabola_step(g)
    deriv = alpha.alpha3 * max(r_hi ** (alpha.alpha3 - 1), r_lo ** (alpha.alpha3 - 1) if r_lo > 0 else 0)
    # each a gets its own step, so its output does not depend on the rest of a_grid
    groups = {}
    for n, av in enumerate(a_grid):
        step = base
        while step * abs(av) * deriv > 1.0 / 8:
            step /= 2
        groups.setdefault(step, []).append(n)
    data = np.ascontiguousarray(f.data, dtype=complex)
    accs = np.zeros((len(a_grid),) + g.shape, dtype=complex)
    buf_p = np.zeros_like(data)
    buf_m = np.zeros_like(data)
    for step, members in groups.items():
        n_lo = int(round(r_lo / step))
        n_hi = int(round(r_hi / step))
        for node in range(n_lo, n_hi):
            t = (node + 0.5) * step
            buf_p[:] = 0
            buf_m[:] = 0
            parabola_sample(data, g, float(alpha.power(t, alpha.alpha1)),
                            float(alpha.power(t, alpha.alpha2)), 1.0, buf_p)
            parabola_sample(data, g, float(alpha.power(-t, alpha.alpha1)),
                            float(alpha.power(-t, alpha.alpha2)), 1.0, buf_m)
            tp = float(alpha.power(t, alpha.alpha3))
            tm = float(alpha.power(-t, alpha.alpha3))
            for n in members:
                av = a_grid[n]
                accs[n] += (step / t) * (e(av * tp) * buf_p - e(av * tm) * buf_m)
    return f.with_data(np.abs(accs).max(axis=0).astype(complex))


# ---------------------------------------------------------------- Fourier-side pairing

def rho_multiplier(xis, etas, avals, chunk=2048):
    """m[v, n] = int e(a_v t^3 - xi_n t - eta_n t^2) rho(t) dt for paired (xi_n, eta_n)."""
    xis = np.asarray(xis, dtype=float)
    etas = np.asarray(etas, dtype=float)
    avals = np.atleast_1d(np.asarray(avals, dtype=float))
    fmax = float(np.max(np.abs(xis)) + 4 * np.max(np.abs(etas)) + 12 * np.max(np.abs(avals)))
    t, w = composite_gl(0.5, 2.0, _panels_for(fmax * 1.5 + 8, 0.5, 2.0))
    w = w * rho_profile(t, exact=True)
    out = np.zeros((len(avals), len(xis)), dtype=complex)
    for s in range(0, len(t), chunk):
        ts = t[s:s + chunk]
        lin = e(-(np.outer(ts, xis) + np.outer(ts ** 2, etas)))      # nodes x modes
        cub = e(np.outer(avals, ts ** 3)) * w[s:s + chunk][None, :]  # levels x nodes
        out += cub @ lin
    return out
