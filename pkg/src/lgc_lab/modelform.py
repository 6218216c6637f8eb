"""Discretized model form Lambda(F, G), its sparse-uniform split and the physical local model."""
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import sparse

from . import DomainError
from .fields import CellField
from .gabor import GaborTensor, f_local_norms, mu_all

EPSILON_DEFAULT = 0.9 / 24
REGIMES = ("SU", "UU", "SS")
SHIFT_CONVENTION = "F index (p - r, q - ceil(r^2/sqrt(lam))) mod P"


def r_values(lam):
    """Integers r with sqrt(lam)/3 <= r <= 3 sqrt(lam)."""
    s = np.sqrt(lam)
    return np.arange(int(np.ceil(s / 3 - 1e-12)), int(np.floor(3 * s + 1e-12)) + 1)


def q_shift(r, lam):
    # q - r^2/sqrt(lam) rounded through q + floor(-r^2/sqrt(lam))
    return int(-np.floor(-r * r / np.sqrt(lam) + 1e-12))


def tf_weight(arg, N):
    return (1.0 + np.asarray(arg, dtype=float) ** 2) ** (-N / 2.0)


def tail_factor(u_cutoff, N):
    """Bound for sum over integers d with |d - x| > u_cutoff of <x - d>^-N."""
    return 2.0 * (u_cutoff ** (-N) + u_cutoff ** (1.0 - N) / (N - 1))


@njit(cache=True)
def _accumulate(Fmag, Flev, Gmag, Glev, sel, wts, shift_p, shift_q, table):
    P = Fmag.shape[1]
    total = 0.0
    for k in range(sel.shape[0]):
        n = sel[k]
        wt = wts[k]
        for p in range(P):
            pp = (p - shift_p) % P
            for q in range(P):
                qq = (q - shift_q) % P
                f = Fmag[n, pp, qq]
                if f == 0.0:
                    continue
                term = wt * f * Gmag[k, p, q]
                table[Flev[n, pp, qq], Glev[p, q]] += term
                total += term
    return total


@dataclass
class LambdaResult:
    value: float
    error_bar: float
    tail_bound: float
    drop_bound: float
    flagged: bool
    n_r: int
    contributions: np.ndarray = None

    def __float__(self):
        return self.value


def _pair_index(F, provider):
    try:
        return np.array([provider.index[(int(u), int(v))] for u, v in F.uv], dtype=np.int64)
    except KeyError as exc:
        raise DomainError(f"provider has no slice for pair {exc.args[0]}") from None


def eval_Lambda(F: GaborTensor, G_provider, lam, N=10, u_cutoff=32, partition=None):
    """E_r sum F_{p-r, q-ceil(r^2/sqrt lam), u, v} G_{p,q,r,u,v,w} <3w r^2/lam - 2v r/sqrt lam - u>^-N.

    Pairs outside the u-window |3wr^2/lam - 2vr/sqrt(lam) - u| <= u_cutoff are skipped and
    bounded by Cauchy-Schwarz; dropped F entries are bounded the same way.
    """
    if u_cutoff < 8:
        raise DomainError("u_cutoff must be at least 8")
    rs = r_values(lam)
    s = np.sqrt(lam)
    Fmag = np.ascontiguousarray(np.abs(F.coeffs))
    P = F.P
    if partition is None:
        Flev = np.zeros(Fmag.shape, dtype=np.int64)
        n_levels = 1
    else:
        Flev = np.ascontiguousarray(np.maximum(partition.f_levels, 0))
        n_levels = partition.table_size
    table = np.zeros((n_levels, n_levels))
    zero_glev = np.zeros((P, P), dtype=np.int64)
    if len(F.uv) == 0 or not np.any(Fmag):
        return LambdaResult(0.0, 0.0, 0.0, 0.0, False, len(rs), table)
    pidx = _pair_index(F, G_provider)
    us = F.uv[:, 0].astype(float)
    vs = F.uv[:, 1].astype(float)
    f_norms = np.sqrt(np.sum(Fmag ** 2, axis=(1, 2)))
    drop_norms = (np.zeros(len(us)) if F.dropped is None
                  else np.sqrt(np.sum(np.abs(F.dropped) ** 2, axis=(1, 2))))
    live_pair = f_norms > 0
    ws = G_provider.active_w()
    partial, tails, drops = [], [], []
    for r in rs:
        shq = q_shift(r, lam)
        for w in ws:
            arg = 3 * w * r * r / lam - 2 * vs * r / s - us
            inside = np.abs(arg) <= u_cutoff
            wts = tf_weight(arg, N)
            need_bounds = np.any(~inside & live_pair) or np.any(drop_norms[inside] > 0)
            if need_bounds:
                gbound = G_provider.norm_bounds(r, w)[pidx]
                tails.append(np.sum(wts[~inside] * f_norms[~inside] * gbound[~inside]))
                drops.append(np.sum(wts[inside] * drop_norms[inside] * gbound[inside]))
            sel = np.nonzero(inside & live_pair)[0]
            if len(sel) == 0:
                continue
            Gmag = np.ascontiguousarray(G_provider.slice(r, w, pidx[sel]), dtype=float)
            glev = zero_glev if partition is None else partition.g_level_array(w)
            partial.append(_accumulate(Fmag, Flev, Gmag, glev, sel.astype(np.int64),
                                       wts[sel].astype(float), int(r), shq, table))
    n_r = len(rs)
    value = float(np.sum(partial)) / n_r if partial else 0.0
    tail = float(np.sum(tails)) / n_r if tails else 0.0
    drop = float(np.sum(drops)) / n_r if drops else 0.0
    table /= n_r
    return LambdaResult(value, tail + drop, tail, drop, tail > 0.01 * value, n_r, table)


def eval_Lambda_bruteforce(F: GaborTensor, G_provider, lam, N=10):
    """Every tuple, no u-window, dropped F entries restored; plain numpy sums."""
    rs = r_values(lam)
    s = np.sqrt(lam)
    full = F.coeffs if F.dropped is None else F.coeffs + F.dropped
    Fmag = np.abs(full)
    if len(F.uv) == 0:
        return 0.0
    pidx = _pair_index(F, G_provider)
    total = 0.0
    for r in rs:
        shifted = np.roll(Fmag, (int(r), q_shift(r, lam)), axis=(1, 2))
        for w in G_provider.active_w():
            Gmag = G_provider.slice(r, w, pidx)
            wts = tf_weight(3 * w * r * r / lam - 2 * F.uv[:, 1] * r / s - F.uv[:, 0], N)
            total += float(np.sum(wts[:, None, None] * shifted * Gmag))
    return total / len(rs)


# ---------------------------------------------------------------- sparse-uniform partition

@dataclass
class LevelPartition:
    lam: float
    f_levels: np.ndarray          # per coefficient of F; -1 marks zero coefficients
    g_levels: dict                # w -> P x P level array (-1 where E_w misses the cell's weight)
    f_norms: np.ndarray
    mu_E: np.ndarray
    mu_Ew: dict
    F: GaborTensor = None
    provider: object = None
    meta: dict = field(default_factory=dict)

    @property
    def table_size(self):
        top = max([int(self.f_levels.max(initial=0))]
                  + [int(g.max(initial=0)) for g in self.g_levels.values()])
        return top + 1

    def g_level_array(self, w):
        g = self.g_levels.get(w)
        if g is None:
            return np.zeros(self.f_norms.shape, dtype=np.int64)
        return np.ascontiguousarray(np.maximum(g, 0))

    def f_level_sets(self):
        """m -> (p, q, u, v) arrays."""
        out = {}
        for m in np.unique(self.f_levels[self.f_levels >= 0]):
            n, p, q = np.nonzero(self.f_levels == m)
            out[int(m)] = (p, q, self.F.uv[n, 0], self.F.uv[n, 1])
        return out

    def g_level_sets(self):
        """n -> list of (p, q, w)."""
        out = {}
        for w, lev in self.g_levels.items():
            for n in np.unique(lev[lev >= 0]):
                p, q = np.nonzero(lev == n)
                out.setdefault(int(n), []).extend(zip(p.tolist(), q.tolist(), [w] * len(p)))
        return out

    def f_counts(self):
        """counts[m, p, q] = #{(u, v): F_{pquv} in level m}."""
        M = int(self.f_levels.max(initial=0)) + 1
        counts = np.zeros((M,) + self.f_norms.shape, dtype=np.int64)
        for m in range(M):
            counts[m] = np.sum(self.f_levels == m, axis=0)
        return counts

    def g_counts(self):
        M = max([int(g.max(initial=0)) for g in self.g_levels.values()] + [0]) + 1
        counts = np.zeros((M,) + self.mu_E.shape, dtype=np.int64)
        for lev in self.g_levels.values():
            for n in range(M):
                counts[n] += lev == n
        return counts

    def chebyshev_ok(self, C=8.0):
        s = np.sqrt(self.lam)
        fc = self.f_counts()
        gc = self.g_counts()
        ok_f = all(np.all(fc[m] <= C * self.lam / 4.0 ** m) for m in range(1, len(fc)))
        ok_g = all(np.all(gc[n] <= C * s / 2.0 ** n) for n in range(1, len(gc)))
        return ok_f and ok_g


def _dyadic_level(ratio):
    out = np.zeros(ratio.shape, dtype=np.int64)
    big = ratio > 1
    out[big] = np.ceil(np.log2(ratio[big]) - 1e-12).astype(np.int64)
    return out


def band_set(E: CellField, a: CellField, lam, w):
    """E_w = {x in E : |a(x)/sqrt(lam) - w| < 1}."""
    z = np.real(a.values) / np.sqrt(lam)
    return CellField(np.where(np.abs(z - w) < 1, np.real(E.values), 0.0), E.length)


def build_partition(F: GaborTensor, G_provider, f, E: CellField, a: CellField, lam, N=10):
    """Dyadic levels of F against ||f||_{L2(mu_pq)}/sqrt(lam) and of mu_pq(E_w) against mu_pq(E)/sqrt(lam).

    f is the SparseSpectrum F was computed from.
    """
    s = np.sqrt(lam)
    f_norms = f_local_norms(f, lam, N)
    mags = np.abs(F.coeffs)
    nz = mags > 0
    norms = np.broadcast_to(f_norms, mags.shape)
    if np.any(nz & (norms <= 0)):
        raise DomainError("nonzero Gabor coefficient in a cell with zero local norm")
    f_levels = np.full(mags.shape, -1, dtype=np.int64)
    f_levels[nz] = _dyadic_level(mags[nz] * s / norms[nz])
    mu_E = mu_all(E, lam, N)
    g_levels, mu_Ew = {}, {}
    for w in G_provider.active_w():
        m_w = mu_all(band_set(E, a, lam, w), lam, N)
        lev = np.full(m_w.shape, -1, dtype=np.int64)
        pos = m_w > 0
        lev[pos] = _dyadic_level(m_w[pos] * s / mu_E[pos])
        g_levels[w] = lev
        mu_Ew[w] = m_w
    return LevelPartition(lam, f_levels, g_levels, f_norms, mu_E, mu_Ew, F, G_provider)


# ---------------------------------------------------------------- dichotomy

@dataclass
class SplitIndexSets:
    epsilon: float
    J_SU: set
    J_UU: set
    J_SS: set

    def regime(self, m, n):
        for name, members in zip(REGIMES, (self.J_SU, self.J_UU, self.J_SS)):
            if (m, n) in members:
                return name
        raise KeyError((m, n))


def classify_pair(m, n, lam, epsilon=EPSILON_DEFAULT, c=1.0):
    if 2.0 ** m >= c * 2.0 ** n * lam ** epsilon:
        return "SU"
    if 4.0 ** m <= c * 2.0 ** n * lam ** (0.5 - 4 * epsilon):
        return "UU"
    return "SS"


def split_index_sets(size, lam, epsilon=EPSILON_DEFAULT, c=1.0):
    sets = {name: set() for name in REGIMES}
    for m in range(size):
        for n in range(size):
            sets[classify_pair(m, n, lam, epsilon, c)].add((m, n))
    return SplitIndexSets(epsilon, sets["SU"], sets["UU"], sets["SS"])


@dataclass
class SplitResult:
    SU: float
    UU: float
    SS: float
    sets: SplitIndexSets
    total: LambdaResult
    table: np.ndarray

    def rows(self):
        """(m, n, regime, count, contribution) for every nonzero table cell."""
        out = []
        for m, n in zip(*np.nonzero(self.table)):
            out.append((int(m), int(n), self.sets.regime(int(m), int(n)), self.table[m, n]))
        return out


def split_Lambda(partition: LevelPartition, epsilon=EPSILON_DEFAULT, N=10, u_cutoff=32, c=1.0):
    if not 0 < epsilon < 1.0 / 24:
        raise DomainError("epsilon must lie in (0, 1/24)")
    res = eval_Lambda(partition.F, partition.provider, partition.lam, N, u_cutoff, partition=partition)
    table = res.contributions
    sets = split_index_sets(table.shape[0], partition.lam, epsilon, c)
    sums = {}
    for name, members in zip(REGIMES, (sets.J_SU, sets.J_UU, sets.J_SS)):
        sums[name] = float(sum(table[m, n] for m, n in members))
    return SplitResult(sums["SU"], sums["UU"], sums["SS"], sets, res, table)


# ---------------------------------------------------------------- physical local model

def _ceil_shift(r, lam):
    return q_shift(r, lam)


def phys_local_operator(u_lin, v_lin, w_lin, lam, N=10):
    """Sparse K with Lambda_* = F2 . K . G2 on the box |p|, |q| <= M (arrays indexed p + M).

    Row (p, q), column (p + r, floor(q + r^2/sqrt lam)), weight kappa(p, q, r)/#r, where kappa reads
    w at (p + r, q + ceil(r^2/sqrt lam)) clipped to the box.
    """
    side = u_lin.shape[0]
    rs = r_values(lam)
    s = np.sqrt(lam)
    pp, qq = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    rows, cols, vals = [], [], []
    for r in rs:
        lo = int(np.floor(r * r / s + 1e-12))
        hi = _ceil_shift(r, lam)
        gp, gq = pp + r, qq + lo
        valid = (gp < side) & (gq < side)
        wp = np.clip(pp + r, 0, side - 1)
        wq = np.clip(qq + hi, 0, side - 1)
        kappa = tf_weight(3 * w_lin[wp, wq] * r * r / lam - 2 * v_lin * r / s - u_lin, N)
        rows.append((pp * side + qq)[valid])
        cols.append((gp * side + gq)[valid])
        vals.append(kappa[valid] / len(rs))
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(side * side, side * side))


def eval_phys_local(F2, G2, u_lin, v_lin, w_lin, lam, N=10):
    """sum_{p,q} E_r F2_{p,q} G2_{p+r, floor(q + r^2/sqrt lam)} kappa(p, q, r); all arrays on one box."""
    F2 = np.asarray(F2, dtype=float)
    if not np.any(F2):
        return 0.0
    K = phys_local_operator(np.asarray(u_lin, float), np.asarray(v_lin, float),
                            np.asarray(w_lin, float), lam, N)
    return float(F2.ravel() @ (K @ np.asarray(G2, dtype=float).ravel()))


def phys_local_worst(u_lin, v_lin, w_lin, lam, N=10):
    """sup of Lambda_* over unit-l2 F2, G2: the top singular value of K, with maximizers."""
    K = phys_local_operator(u_lin, v_lin, w_lin, lam, N)
    side = u_lin.shape[0]
    if K.nnz == 0:
        return 0.0, np.zeros((side, side)), np.zeros((side, side))
    # power iteration on K^T K; K >= 0 so the maximizers are nonnegative
    rng = np.random.default_rng(0)
    g = rng.random(K.shape[1]) + 0.5
    g /= np.linalg.norm(g)
    value = 0.0
    for _ in range(500):
        f = K @ g
        nf = np.linalg.norm(f)
        if nf == 0:
            break
        f /= nf
        g_new = K.T @ f
        value_new = np.linalg.norm(g_new)
        g = g_new / value_new
        if abs(value_new - value) <= 1e-12 * value_new:
            value = value_new
            break
        value = value_new
    return float(value), f.reshape(side, side), g.reshape(side, side)


# ---------------------------------------------------------------- decay fits

@dataclass
class DecaySeries:
    lams: np.ndarray
    values: np.ndarray
    error_bars: np.ndarray
    sigma_hat: float = float("nan")
    intercept: float = float("nan")
    residual: float = float("nan")


def fit_decay(lams, values, error_bars=None):
    """Least squares log(value) = intercept - sigma log(lam); residual is the RMS log misfit."""
    lams = np.asarray(lams, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(lams) < 3:
        raise DomainError("need at least three points")
    if np.any(values <= 0):
        raise DomainError("decay fit needs positive values")
    if np.any(np.diff(lams) <= 0):
        raise DomainError("lambda values must increase")
    X = np.stack([np.ones_like(lams), np.log(lams)], axis=1)
    coef, *_ = np.linalg.lstsq(X, np.log(values), rcond=None)
    resid = np.log(values) - X @ coef
    bars = np.zeros_like(values) if error_bars is None else np.asarray(error_bars, dtype=float)
    return DecaySeries(lams, values, bars, float(-coef[1]), float(coef[0]),
                       float(np.sqrt(np.mean(resid ** 2))))
