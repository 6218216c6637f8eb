"""Time-frequency correlation level sets: bracket lemma, wedge determinants, sublevel estimates, kernel L1."""
from dataclasses import dataclass
from itertools import product

import numpy as np
from numba import njit

from . import ConfigError, DomainError
from .numerics import jap_bracket

C_VDC = 64.0
GL8_X, GL8_W = np.polynomial.legendre.leggauss(8)


class SingularSystemError(DomainError):
    """Raised by det_MY on repeated coordinates; carries the closed form (zero)."""

    def __init__(self, msg, closed_form):
        super().__init__(msg)
        self.closed_form = closed_form


# ---------------------------------------------------------------- bracket lemma

def jap_product_check(x, y, a, b):
    """Slack of <x>^-1 <y>^-1 <= <(ax+by)/(|a|+|b|)>^-1 (<x>^-1 + <y>^-1); nonnegative when it holds."""
    if a == 0 and b == 0:
        raise DomainError("a and b cannot both vanish")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    bx = jap_bracket(np.linalg.norm(x))
    by = jap_bracket(np.linalg.norm(y))
    bm = jap_bracket(np.linalg.norm((a * x + b * y) / (abs(a) + abs(b))))
    return float((1.0 / bx + 1.0 / by) / bm - 1.0 / (bx * by))


# ---------------------------------------------------------------- wedge determinants

def _powers(Y, a):
    Y = np.asarray(Y, dtype=float)
    if float(a) != int(a) and np.any(Y < 0):
        raise DomainError("negative base with fractional exponent")
    return Y ** a


def wedge_det(a, b, c, Y):
    """det of the rows (Y_i^a, Y_i^b, Y_i^c)."""
    M = np.stack([_powers(Y, a), _powers(Y, b), _powers(Y, c)], axis=1)
    return float(np.linalg.det(M))


def M_Y(Y):
    """Matrix with (Y + x^2)^2 v ^ Y^2 1 ^ Y^3 1 = (1, x^2, x^4) M_Y v."""
    Y = np.asarray(Y, dtype=float)
    cross = np.cross(Y ** 2, Y ** 3)
    return np.stack([cross * Y ** 2, 2 * cross * Y, cross])


def M_Y_constructed(Y):
    """M_Y recovered from its action on 1, Y1, Y^2 1."""
    Y = np.asarray(Y, dtype=float)
    y423 = wedge_det(4, 2, 3, Y)
    y123 = wedge_det(1, 2, 3, Y)
    y023 = wedge_det(0, 2, 3, Y)
    rhs = np.array([[0.0, 0.0, y423],
                    [2 * y123, 0.0, 0.0],
                    [y023, y123, 0.0]])
    basis = np.stack([np.ones(3), Y, Y ** 2], axis=1)
    # M B = R  <=>  B^T M^T = R^T
    return np.linalg.solve(basis.T, rhs.T).T


def det_MY_closed(Y):
    Y1, Y2, Y3 = map(float, Y)
    return 2 * (Y1 * Y2 * Y3) ** 4 * (Y1 - Y2) ** 2 * (Y1 - Y3) ** 2 * (Y2 - Y3) ** 2


def det_MY(Y):
    """(det of the solved matrix, closed form 2 (Y1Y2Y3)^4 Vandermonde^2)."""
    closed = det_MY_closed(Y)
    Y = np.asarray(Y, dtype=float)
    if len(np.unique(Y)) < 3:
        raise SingularSystemError("repeated coordinates make the construction singular", closed)
    return float(np.linalg.det(M_Y_constructed(Y))), closed


def coeff_vector(Y, U, V):
    """C_0..C_5 with (Y + x^2)^2 (x U + Y V) ^ Y^2 1 ^ Y^3 1 = sum_j C_j x^j."""
    Y = np.asarray(Y, dtype=float)
    M = M_Y(Y)
    odd = M @ np.asarray(U, dtype=float)
    even = M @ (Y * np.asarray(V, dtype=float))
    C = np.zeros(6)
    C[0::2] = even
    C[1::2] = odd
    return C


def wedge_polynomial(x, Y, U, V):
    """Direct evaluation of the wedge expression at x."""
    Y = np.asarray(Y, dtype=float)
    first = (Y + x * x) ** 2 * (x * np.asarray(U, float) + Y * np.asarray(V, float))
    return float(np.linalg.det(np.stack([first, Y ** 2, Y ** 3], axis=1)))


def block_matrix(Y):
    M = M_Y(Y)
    out = np.zeros((6, 6))
    out[:3, :3] = M
    out[3:, 3:] = M @ np.diag(np.asarray(Y, dtype=float))
    return out


def smallest_singular_value(Y):
    return float(np.linalg.svd(block_matrix(Y), compute_uv=False)[-1])


# entries of M_Y and M_Y Y are bounded by 2 on [0,1]^3, so every singular value is <= 2*sqrt(18)
SINGULAR_CEILING = 2.0 * np.sqrt(18.0)


# ---------------------------------------------------------------- Van der Corput sublevel estimate

@dataclass
class PolySpec:
    n: int
    d: int
    coeffs: dict

    def __post_init__(self):
        for alpha in self.coeffs:
            if len(alpha) != self.n or sum(alpha) > self.d or min(alpha) < 0:
                raise DomainError(f"bad multi-index {alpha}")

    @property
    def l1(self):
        return float(sum(abs(c) for c in self.coeffs.values()))

    def __call__(self, *xs):
        out = 0.0
        for alpha, c in self.coeffs.items():
            term = c
            for x, k in zip(xs, alpha):
                term = term * np.asarray(x, dtype=float) ** k
            out = out + term
        return out


@dataclass
class VdcResult:
    estimate: float
    bound: float
    passed: bool
    applicable: bool = True


@njit(cache=True)
def _horner(c, t):
    acc = 0.0
    for k in range(c.shape[0] - 1, -1, -1):
        acc = acc * t + c[k]
    return acc


@njit(cache=True)
def _bracket_pow(p, power):
    """(1 + p^2)^(-power/2), by repeated multiplication when power is an even integer."""
    b = 1.0 + p * p
    k = int(power)
    if k == power and k % 2 == 0:
        out = 1.0
        for _ in range(k // 2):
            out *= b
        return 1.0 / out
    return b ** (-0.5 * power)


@njit(cache=True)
def _graded_piece(c, dc, lo, hi, power, gx, gw):
    """int_lo^hi (1 + p(t)^2)^(-power/2) dt, nodes graded toward the endpoint with smaller |p|."""
    if hi <= lo:
        return 0.0
    pa = abs(_horner(c, lo))
    pb = abs(_horner(c, hi))
    if pa <= pb:
        e, sgn = lo, 1.0
        slope = abs(_horner(dc, lo))
    else:
        e, sgn = hi, -1.0
        slope = abs(_horner(dc, hi))
    width = hi - lo
    lead = abs(c[c.shape[0] - 1]) if c.shape[0] > 2 else 0.0
    delta = 1.0 / (slope + np.sqrt(lead) + 1.0)
    if delta > width:
        delta = width
    total = 0.0
    a = 0.0
    b = delta
    while True:
        if b > width:
            b = width
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        for k in range(gx.shape[0]):
            t = e + sgn * (mid + half * gx[k])
            p = _horner(c, t)
            total += half * gw[k] * _bracket_pow(p, power)
        if b >= width:
            break
        a = b
        b = 2.0 * b
    return total


@njit(cache=True)
def _line_integral(c, dc, cuts, lo, hi, power, gx, gw):
    """Integral over [lo, hi] split at the sorted interior cut points."""
    total = 0.0
    prev = lo
    for k in range(cuts.shape[0]):
        t = cuts[k]
        if t <= prev or t >= hi:
            continue
        total += _graded_piece(c, dc, prev, t, power, gx, gw)
        prev = t
    total += _graded_piece(c, dc, prev, hi, power, gx, gw)
    return total


@njit(cache=True)
def _lines(coef, cuts, power, gx, gw):
    out = np.empty(coef.shape[0])
    deg = coef.shape[1] - 1
    for i in range(coef.shape[0]):
        c = coef[i]
        dc = np.zeros(max(deg, 1))
        for k in range(1, deg + 1):
            dc[k - 1] = k * c[k]
        out[i] = _line_integral(c, dc, np.sort(cuts[i]), -1.0, 1.0, power, gx, gw)
    return out


def _cut_points(coef):
    """Real parts of the roots of p and p' on each line: where |p| can be small."""
    L, D = coef.shape
    cuts = np.full((L, 2 * D), 2.0)
    for i, c in enumerate(coef):
        c = np.trim_zeros(c, "b")
        if len(c) <= 1:
            continue
        roots = np.roots(c[::-1])
        crit = np.roots((np.arange(1, len(c)) * c[1:])[::-1]) if len(c) > 2 else np.zeros(0)
        pts = np.concatenate([roots.real, crit.real])
        cuts[i, :len(pts)] = pts
    return cuts


def sublevel_l1(poly: PolySpec, outer=None, power=1.0):
    """|| <P>^-power ||_{L1([-1,1]^n)}: last variable integrated along lines, the others by midpoint."""
    n, d = poly.n, poly.d
    c1 = poly.l1
    if outer is None:
        scale = max(1.0, c1) ** (1.0 / max(d, 1))
        outer = int(np.clip(np.ceil(8 * scale), 32, 256 if n <= 2 else 64))
    h = 2.0 / outer
    mids = -1.0 + (np.arange(outer) + 0.5) * h
    grids = np.meshgrid(*([mids] * (n - 1)), indexing="ij") if n > 1 else []
    flat = [g.ravel() for g in grids]
    lines = flat[0].shape[0] if n > 1 else 1
    coef = np.zeros((lines, d + 1))
    for alpha, c in poly.coeffs.items():
        term = np.full(lines, float(c))
        for x, k in zip(flat, alpha[:-1]):
            term = term * x ** k
        coef[:, alpha[-1]] += term
    cuts = _cut_points(coef)
    vals = _lines(coef, cuts, float(power), GL8_X, GL8_W)
    return float(np.sum(vals) * h ** (n - 1))


def vdc_sublevel(poly: PolySpec, C=C_VDC):
    c1 = poly.l1
    if c1 == 0:
        return VdcResult(2.0 ** poly.n, C, True, applicable=False)
    dmax = max(sum(a) for a, c in poly.coeffs.items() if c != 0)
    if dmax == 0:
        c0 = sum(poly.coeffs.values())
        est = 2.0 ** poly.n / jap_bracket(c0)
        return VdcResult(est, C * jap_bracket(c1) ** (-1.0 / 2), est <= C * jap_bracket(c1) ** (-0.5))
    est = sublevel_l1(poly)
    bound = C * jap_bracket(c1) ** (-1.0 / (2 * poly.d + 2))
    return VdcResult(est, bound, est <= bound)


def random_polyspec(rng, n_max=3, d_max=6, log_range=(0.0, 8.0)):
    """Random coefficients on all monomials up to degree d, rescaled to a log-uniform l1 norm."""
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    alphas = [a for a in product(range(d + 1), repeat=n) if sum(a) <= d]
    vals = rng.standard_normal(len(alphas))
    target = 10.0 ** rng.uniform(*log_range)
    vals *= target / np.sum(np.abs(vals))
    return PolySpec(n, d, dict(zip(alphas, vals)))


# ---------------------------------------------------------------- kernel L1

BOX_X = (-1.0, 3.0)
BOX_Y = (-1.0, 5.0)


@dataclass
class KernelSpec:
    """Linearizers u, v, w constant on square cells of side h over BOX_X x BOX_Y."""
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    h: float
    lam: float
    N: int = 10
    C: float = 8.0
    name: str = "custom"

    def validate(self):
        mag = np.maximum(np.maximum(np.abs(self.u), np.abs(self.v)), np.abs(self.w))
        if np.any(mag < self.lam / self.C) or np.any(mag > self.C * self.lam):
            raise ConfigError(f"linearizer magnitudes leave [lam/{self.C:g}, {self.C:g} lam]")


def cell_shape(h):
    return (int(np.ceil((BOX_X[1] - BOX_X[0]) / h)), int(np.ceil((BOX_Y[1] - BOX_Y[0]) / h)))


def constant_kernel_spec(lam, u=0.0, v=0.0, w=0.0, N=10):
    h = 1.0 / 8
    shape = cell_shape(h)
    return KernelSpec(np.full(shape, float(u)), np.full(shape, float(v)), np.full(shape, float(w)), h, lam, N)


def random_sign_spec(lam, seed=0, N=10):
    """u, v, w = lam * independent random signs on 1/sqrt(lam) cells."""
    h = 1.0 / np.sqrt(lam)
    shape = cell_shape(h)
    rng = np.random.Generator(np.random.Philox(key=seed))
    u, v, w = (lam * rng.choice([-1.0, 1.0], size=shape) for _ in range(3))
    return KernelSpec(u, v, w, h, lam, N, name="random-sign")


def locked_sweep_spec(lam, seed=0, N=10):
    """u = v = lam; w sweeps so that w(X) X^2 + lam X + lam = 0 along the x = 0 column."""
    h = 1.0 / np.sqrt(lam)
    shape = cell_shape(h)
    xc = BOX_X[0] + (np.arange(shape[0]) + 0.5) * h
    tc = np.clip(xc, 0.5, 2.0)
    w_col = -lam * (tc + 1) / tc ** 2
    w = np.repeat(w_col[:, None], shape[1], axis=1)
    u = np.full(shape, float(lam))
    return KernelSpec(u, u.copy(), w, h, lam, N, name="locked")


@njit(cache=True)
def _cell(val, origin, h, size):
    k = int(np.floor((val - origin) / h))
    if k < 0:
        k = 0
    if k >= size:
        k = size - 1
    return k


@njit(cache=True)
def _t_integral(x, y, u, v, wtab, x0, y0, h, N, gx, gw):
    nx, ny = wtab.shape
    # curve (x + t, y + t^2) crosses cell edges here
    kx0 = max(int(np.floor((x + 0.5 - x0) / h)), 0)
    kx1 = min(int(np.ceil((x + 2.0 - x0) / h)), nx)
    ky0 = max(int(np.floor((y + 0.25 - y0) / h)), 0)
    ky1 = min(int(np.ceil((y + 4.0 - y0) / h)), ny)
    cuts = np.empty(kx1 - kx0 + ky1 - ky0 + 2)
    m = 0
    for k in range(kx0, kx1 + 1):
        t = x0 + k * h - x
        if 0.5 < t < 2.0:
            cuts[m] = t
            m += 1
    for k in range(ky0, ky1 + 1):
        s = y0 + k * h - y
        if 0.25 < s < 4.0:
            cuts[m] = np.sqrt(s)
            m += 1
    cuts = np.sort(cuts[:m])
    total = 0.0
    prev = 0.5
    coef = np.zeros(3)
    dcoef = np.zeros(2)
    sub = np.empty(3)
    for k in range(m + 1):
        nxt = cuts[k] if k < m else 2.0
        if nxt <= prev:
            continue
        tm = 0.5 * (prev + nxt)
        w = wtab[_cell(x + tm, x0, h, nx), _cell(y + tm * tm, y0, h, ny)]
        coef[0] = u
        coef[1] = v
        coef[2] = w
        dcoef[0] = v
        dcoef[1] = 2 * w
        ns = 0
        if w != 0.0:
            sub[ns] = -v / (2 * w)
            ns += 1
            disc = v * v - 4 * w * u
            if disc >= 0:
                r = np.sqrt(disc)
                sub[ns] = (-v - r) / (2 * w)
                ns += 1
                sub[ns] = (-v + r) / (2 * w)
                ns += 1
        elif v != 0.0:
            sub[ns] = -u / v
            ns += 1
        pieces = np.sort(sub[:ns])
        lo = prev
        for j in range(ns + 1):
            hi = pieces[j] if j < ns else nxt
            if hi <= lo:
                continue
            if hi > nxt:
                hi = nxt
            qa = abs(_horner(coef, lo))
            qb = abs(_horner(coef, hi))
            qmin = min(qa, qb)
            if _bracket_pow(qmin, N) > 1e-18:
                total += _graded_piece(coef, dcoef, lo, hi, float(N), gx, gw)
            elif _bracket_pow(qmin, N) > 1e-30:
                # small and smooth: one Gauss-Legendre panel
                half = 0.5 * (hi - lo)
                mid = 0.5 * (hi + lo)
                for g in range(gx.shape[0]):
                    q = _horner(coef, mid + half * gx[g])
                    total += half * gw[g] * _bracket_pow(q, N)
            lo = hi
        prev = nxt
    return total


@njit(cache=True)
def _kernel_grid(utab, vtab, wtab, x0, y0, h, N, n_side, gx, gw):
    step = 2.0 / n_side
    nx, ny = utab.shape
    total = 0.0
    for i in range(n_side):
        x = -1.0 + (i + 0.5) * step
        ci = _cell(x, x0, h, nx)
        row = 0.0
        for j in range(n_side):
            y = -1.0 + (j + 0.5) * step
            cj = _cell(y, y0, h, ny)
            row += _t_integral(x, y, utab[ci, cj], vtab[ci, cj], wtab, x0, y0, h, N, gx, gw)
        total += row
    return total * step * step


@dataclass
class KernelEstimate:
    estimate: float
    error_bar: float
    mode: str
    samples: int


def kernel_L1(spec: KernelSpec, sampler=None, validate=True):
    """int_{[-1,1]^2} int_{1/2}^2 <w(x+t, y+t^2) t^2 + v(x,y) t + u(x,y)>^-N dt dx dy.

    sampler: {'mode': 'grid', 'step': h} (default h = 1/256) or {'mode': 'mc', 'count': M, 'seed': s}.
    Grid error bar is the change from halving the resolution; Monte Carlo reports 3 standard errors.
    """
    if validate:
        spec.validate()
    sampler = dict(sampler or {"mode": "grid"})
    args = (np.ascontiguousarray(spec.u, float), np.ascontiguousarray(spec.v, float),
            np.ascontiguousarray(spec.w, float), BOX_X[0], BOX_Y[0], float(spec.h), float(spec.N))
    if sampler.get("mode", "grid") == "grid":
        n_side = int(round(2.0 / sampler.get("step", 1.0 / 256)))
        fine = _kernel_grid(*args, n_side, GL8_X, GL8_W)
        coarse = _kernel_grid(*args, max(n_side // 2, 1), GL8_X, GL8_W)
        return KernelEstimate(fine, abs(fine - coarse), "grid", n_side * n_side)
    count = int(sampler.get("count", 10 ** 7))
    seed = int(sampler.get("seed", 0))
    chunk = int(sampler.get("chunk", 10 ** 6))
    sums = np.zeros(2)
    for c, start in enumerate(range(0, count, chunk)):
        size = min(chunk, count - start)
        rng = np.random.Generator(np.random.Philox(key=[seed, c]))
        pts = rng.random((3, size))
        sums += _mc_chunk(*args, pts)
    mean = sums[0] / count
    var = max(sums[1] / count - mean * mean, 0.0)
    vol = 6.0
    return KernelEstimate(vol * mean, 3 * vol * np.sqrt(var / count), "mc", count)


@njit(cache=True)
def _mc_chunk(utab, vtab, wtab, x0, y0, h, N, pts):
    nx, ny = utab.shape
    s1 = 0.0
    s2 = 0.0
    for k in range(pts.shape[1]):
        x = -1.0 + 2.0 * pts[0, k]
        y = -1.0 + 2.0 * pts[1, k]
        t = 0.5 + 1.5 * pts[2, k]
        ci = _cell(x, x0, h, nx)
        cj = _cell(y, y0, h, ny)
        w = wtab[_cell(x + t, x0, h, nx), _cell(y + t * t, y0, h, ny)]
        q = w * t * t + vtab[ci, cj] * t + utab[ci, cj]
        val = _bracket_pow(q, N)
        s1 += val
        s2 += val * val
    out = np.empty(2)
    out[0] = s1
    out[1] = s2
    return out
