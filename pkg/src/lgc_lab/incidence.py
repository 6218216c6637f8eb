"""Point-parabola incidences on the 2^m x 2^m torus grid and the spatial sparse-uniform split."""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numba import njit

from . import DomainError
from .fields import SampledField2D

C_CS = 32.0
C_GEO = 16.0
C_58 = 32.0
ROUNDING = "round(q^2/2^m) = floor(q^2/2^m + 1/2)"
WRAP = "coordinates reduced mod 2^m into {1..2^m}"


def probe_offsets(m):
    """(q, round(q^2 / 2^m)) for q = 1..2^m."""
    side = 1 << m
    q = np.arange(1, side + 1, dtype=np.int64)
    # exact half-up rounding in integers
    return q, (2 * q * q + side) // (2 * side)


@dataclass
class IncidenceInstance:
    m: int
    A: np.ndarray      # (k, 2) points (p, r), 1-based
    B: np.ndarray      # (k, 2) points (p, q), 1-based
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        side = 1 << self.m
        for name in ("A", "B"):
            pts = np.asarray(getattr(self, name), dtype=np.int64).reshape(-1, 2)
            if len(pts) and (pts.min() < 1 or pts.max() > side):
                raise DomainError(f"{name} has coordinates outside 1..{side}")
            if len(pts):
                # sorted and deduplicated through linear cell keys
                keys = np.unique((pts[:, 0] - 1) * side + (pts[:, 1] - 1))
                pts = np.stack([keys // side + 1, keys % side + 1], axis=1)
            setattr(self, name, pts)

    @property
    def side(self):
        return 1 << self.m

    def level(self, which):
        """l = 2m - log2 #A (exact when #A is a power of two)."""
        count = len(self.A if which == "A" else self.B)
        if count == 0:
            return float("inf")
        if count & (count - 1) == 0:
            return Fraction(2 * self.m - (count.bit_length() - 1))
        return 2 * self.m - np.log2(count)

    def mask(self, which):
        out = np.zeros((self.side, self.side), dtype=bool)
        pts = self.A if which == "A" else self.B
        if len(pts):
            out[pts[:, 0] - 1, pts[:, 1] - 1] = True
        return out

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(f"# m={self.m}\n# A\n")
            for p, r in self.A:
                fh.write(f"{p} {r}\n")
            fh.write("# B\n")
            for p, q in self.B:
                fh.write(f"{p} {q}\n")


def read_instance(path):
    m, section, A, B = None, None, [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# m="):
                m = int(line[4:])
            elif line == "# A":
                section = A
            elif line == "# B":
                section = B
            elif line:
                section.append(tuple(map(int, line.split())))
    return IncidenceInstance(m, np.array(A, dtype=np.int64).reshape(-1, 2), np.array(B, dtype=np.int64).reshape(-1, 2))


def random_instance(m, count_a, count_b, seed=0):
    """Uniform without replacement at fixed cardinality; counter-based stream keyed by seed."""
    side = 1 << m
    rng = np.random.Generator(np.random.Philox(key=seed))
    a = rng.choice(side * side, size=count_a, replace=False)
    b = rng.choice(side * side, size=count_b, replace=False)
    to_pts = lambda idx: np.stack([idx // side + 1, idx % side + 1], axis=1)
    return IncidenceInstance(m, to_pts(a), to_pts(b), {"seed": seed})


def parabola_cells(P, m):
    """Cells of the discretized parabola through P = (p, r), 1-based, one per q."""
    side = 1 << m
    q, s = probe_offsets(m)
    return np.stack([(P[0] - 1 + q) % side + 1, (P[1] - 1 + s) % side + 1], axis=1)


def parabola_image(A, m):
    if len(A) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.concatenate([parabola_cells(P, m) for P in A]), axis=0)


@njit(cache=True)
def _count_loop(A, Bmask, q, s, side):
    total = 0
    for i in range(A.shape[0]):
        p = A[i, 0] - 1
        r = A[i, 1] - 1
        for k in range(q.shape[0]):
            if Bmask[(p + q[k]) % side, (r + s[k]) % side]:
                total += 1
    return total


def count_incidences_bruteforce(inst: IncidenceInstance):
    q, s = probe_offsets(inst.m)
    return int(_count_loop(inst.A, inst.mask("B"), q, s, inst.side))


@lru_cache(maxsize=16)
def _probe_transform(m):
    side = 1 << m
    q, s = probe_offsets(m)
    probe = np.zeros((side, side))
    np.add.at(probe, (q % side, s % side), 1.0)
    return np.fft.rfft2(probe)


def incidence_profile(inst: IncidenceInstance):
    """n_Q = #{R in A : the parabola through R meets Q}, for every grid cell Q (torus correlation by FFT)."""
    side = inst.side
    a = inst.mask("A").astype(float)
    n_q = np.fft.irfft2(np.fft.rfft2(a) * _probe_transform(inst.m), s=(side, side))
    return np.rint(n_q).astype(np.int64)


def count_incidences(inst: IncidenceInstance, method="fast"):
    if method == "brute":
        return count_incidences_bruteforce(inst)
    if len(inst.A) == 0 or len(inst.B) == 0:
        return 0
    n_q = incidence_profile(inst)
    return int(n_q[inst.B[:, 0] - 1, inst.B[:, 1] - 1].sum())


def torus_distance(P, R, m):
    side = 1 << m
    d = np.abs(np.asarray(P, dtype=np.int64) - np.asarray(R, dtype=np.int64)) % side
    return int(np.max(np.minimum(d, side - d)))


def pair_overlap(P, R, m, C_geo=C_GEO):
    """(number of shared cells of the two discretized parabolas, bound C_geo 2^m/(|P - R| + 1))."""
    if tuple(P) == tuple(R):
        raise DomainError("pair_overlap needs distinct points")
    side = 1 << m
    cp = parabola_cells(P, m)
    cr = parabola_cells(R, m)
    keys_p = (cp[:, 0] - 1) * side + (cp[:, 1] - 1)
    keys_r = (cr[:, 0] - 1) * side + (cr[:, 1] - 1)
    overlap = int(np.isin(keys_p, keys_r).sum())
    bound = C_geo * side / (torus_distance(P, R, m) + 1)
    return overlap, bound


@dataclass
class BoundsReport:
    trivial: float
    cs: float
    observed: int
    passed: bool


def incidence_bounds(inst: IncidenceInstance, C=C_CS, observed=None):
    na, nb = len(inst.A), len(inst.B)
    side = inst.side
    trivial = float(min(na * nb, side * na, side * nb))
    cs = C * min(na * nb, np.sqrt(side) * na ** 0.75 * nb ** 0.5, np.sqrt(side) * nb ** 0.75 * na ** 0.5)
    obs = count_incidences(inst) if observed is None else observed
    return BoundsReport(trivial, float(cs), obs, obs <= min(trivial, cs))


def chain_audit(inst: IncidenceInstance):
    """Integer checks of I <= #B + (sum_{n_Q>=2} n_Q^2)^(1/2) #B^(1/2) and of sum n_Q^2 <= sum_{P,R} n_Q(P,R)."""
    n_q = incidence_profile(inst)
    on_b = n_q[inst.B[:, 0] - 1, inst.B[:, 1] - 1] if len(inst.B) else np.zeros(0, np.int64)
    I = int(on_b.sum())
    nb = len(inst.B)
    heavy = on_b[on_b >= 2]
    S = int(np.sum(heavy.astype(object) ** 2)) if len(heavy) else 0
    excess = I - nb
    i1 = excess <= 0 or excess * excess <= S * nb
    return {"I": I, "B": nb, "heavy_square_sum": S, "i1": bool(i1), "n_q": on_b}


def pair_sum_exhaustive(inst: IncidenceInstance):
    """sum over ordered P, R in A of #(cells of B met by both parabolas)."""
    side = inst.side
    bmask = inst.mask("B")
    hits = []
    for P in inst.A:
        cells = parabola_cells(P, inst.m)
        on = bmask[cells[:, 0] - 1, cells[:, 1] - 1]
        hits.append(set(((cells[on, 0] - 1) * side + cells[on, 1] - 1).tolist()))
    return sum(len(hp & hr) for hp in hits for hr in hits)


def i2_audit(inst: IncidenceInstance):
    audit = chain_audit(inst)
    rhs = pair_sum_exhaustive(inst)
    return audit["heavy_square_sum"] <= rhs, audit["heavy_square_sum"], rhs


@dataclass
class ImprovingReport:
    value: float
    bound58: float
    bound23: float
    pass58: bool


def lp_improving_form(F_cells, G_cells, m, C=C_58, observed=None):
    """2^-3m I for cell sets F, G of the unit box at resolution 2^-m, against C |F|^a |G|^a."""
    inst = IncidenceInstance(m, np.asarray(F_cells).reshape(-1, 2), np.asarray(G_cells).reshape(-1, 2))
    value = (count_incidences(inst) if observed is None else observed) / 2.0 ** (3 * m)
    area_f = len(inst.A) / 4.0 ** m
    area_g = len(inst.B) / 4.0 ** m
    b58 = C * (area_f * area_g) ** (5 / 8)
    b23 = C * (area_f * area_g) ** (2 / 3)
    return ImprovingReport(value, b58, b23, value <= b58)


# ---------------------------------------------------------------- spatial sparse-uniform split

def cell_levels(f: SampledField2D, m):
    """l per 2^-m cell: 0 if the cell mean of |f|^2 is <= ||f||_2^2, else ceil(log2(mean / ||f||^2))."""
    g = f.grid
    side = 1 << m
    if g.nx % side or g.ny % side:
        raise DomainError(f"grid {g.nx}x{g.ny} is not a multiple of 2^{m}")
    dens = np.abs(f.data) ** 2
    bx, by = g.nx // side, g.ny // side
    means = dens.reshape(side, bx, side, by).mean(axis=(1, 3))
    total = float(np.sum(dens) * g.cell_area) / (g.nx * g.hx * g.ny * g.hy)
    if total <= 0:
        raise DomainError("spatial_dichotomy needs a nonzero field")
    ratio = means / total
    levels = np.zeros((side, side), dtype=np.int64)
    big = ratio > 1
    levels[big] = np.ceil(np.log2(ratio[big]) - 1e-12).astype(np.int64)
    return levels, means


def spatial_dichotomy(f: SampledField2D, lam, epsilon, g: SampledField2D = None):
    """f = f_U + f_S by cell level l <= epsilon m; report carries the sparse majorant against g (default f).

    Grid cells are the 2^-m squares of the unit-area box with m = round(log2 lam).
    """
    m = int(round(np.log2(lam)))
    g = f if g is None else g
    lev_f, _ = cell_levels(f, m)
    lev_g, _ = cell_levels(g, m)
    side = 1 << m
    bx = f.grid.nx // side
    by = f.grid.ny // side
    uniform = np.repeat(np.repeat(lev_f <= epsilon * m, bx, axis=0), by, axis=1)
    f_U = f.with_data(np.where(uniform, f.data, 0))
    f_S = f.with_data(np.where(uniform, 0, f.data))
    majorant, bound_sum, table = 0.0, 0.0, []
    for l in np.unique(lev_f):
        for s in np.unique(lev_g):
            if l + s < epsilon * m:
                continue
            Fc = np.argwhere(lev_f == l) + 1
            Gc = np.argwhere(lev_g == s) + 1
            rep = lp_improving_form(Fc, Gc, m)
            weight = 2.0 ** ((l + s) / 2)
            majorant += weight * rep.value
            bound_sum += weight * rep.bound58
            table.append((int(l), int(s), rep.value, rep.bound58))
    norm = f.norm2()
    sup_U = float(np.max(np.abs(f_U.data)))
    report = {
        "m": m,
        "epsilon": epsilon,
        "levels": lev_f,
        "sparse_majorant": majorant,
        "bound58_sum": bound_sum,
        "decay_reference": 2.0 ** (-epsilon * m / 10),
        "table": table,
        "sup_uniform": sup_U,
        "sup_cap": 2.0 ** (epsilon * m / 2) * norm * np.sqrt(lam),
    }
    return f_U, f_S, report
