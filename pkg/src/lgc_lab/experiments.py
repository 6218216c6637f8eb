"""Experiment definitions shared by the command line runner and the acceptance suite.

Each experiment splits into independent tasks (pure functions of their arguments), and a
finalizer that merges task rows in task order, fits exponents and builds the CSV tables.
"""
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import AccuracyError, ConfigError
from . import gabor, incidence, levelset, modelform, transform
from .fields import (CellField, Grid2D, SampledField2D, SparseSpectrum, hilbert_star_parabola,
                     maximal_parabola, maximal_strong)
from .numerics import e


def stream(seed, *tags):
    """Counter-based generator keyed by (seed, tags); independent of task scheduling."""
    word = zlib.crc32(repr(tuple(tags)).encode())
    return np.random.Generator(np.random.Philox(key=[int(seed), word]))


@dataclass
class Table:
    header: list
    rows: list = field(default_factory=list)  # tuples of python scalars
    flags: list = field(default_factory=list)  # (row index, reason)


@dataclass
class Outcome:
    tables: dict
    fitted_exponent: float
    pass_count: int
    total: int
    extra: dict = field(default_factory=dict)


def _fit_or_nan(lams, values):
    try:
        return modelform.fit_decay(lams, values)
    except Exception:
        return None


# ---------------------------------------------------------------- theorem proxy

PROXY_PRESETS = ("degenerate", "random-sign", "greedy", "chirp", "locked")
PROXY_LENGTH = 1.0 / 16


def _proxy_modes(rng, lam, K, length):
    band_lo, band_hi = lam * length, 2 * lam * length
    out = set()
    while len(out) < K:
        kx, ky = rng.integers(-int(band_hi) + 1, int(band_hi), size=2)
        if max(abs(kx), abs(ky)) >= band_lo:
            out.add((int(kx), int(ky)))
    k = np.array(sorted(out), dtype=np.int64)
    c = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    return k[:, 0], k[:, 1], c


def _cells_from_modes(kx, ky, amps, n):
    """Values at the n x n cell centres of sum amps e(k.x/L)."""
    spec = np.zeros((n, n), dtype=complex)
    phase = e((kx + ky) / (2.0 * n))
    np.add.at(spec, (kx % n, ky % n), amps * phase)
    return np.fft.ifft2(spec) * n * n


def _proxy_field(kx, ky, c, levels, level_of_cell, n, length):
    """Cf on cells for a piecewise constant a taking levels[level_of_cell]."""
    m = transform.rho_multiplier(kx / length, ky / length, levels)
    out = np.zeros((n, n), dtype=complex)
    for v in range(len(levels)):
        sel = level_of_cell == v
        if np.any(sel):
            vals = _cells_from_modes(kx, ky, c * m[v], n)
            out[sel] = vals[sel]
    return out, m


def _proxy_pairing(kx, ky, c, m, level_of_cell, E_cells, n, length):
    """Exact int_E Cf for E a union of cells and a constant on cells."""
    h = length / n
    cell_int = h * h * np.sinc(kx / n) * np.sinc(ky / n) * e((kx + ky) / (2.0 * n))
    total = 0j
    for v in range(m.shape[0]):
        S = (E_cells & (level_of_cell == v)).astype(float)
        if not S.any():
            continue
        dft = np.fft.ifft2(S) * n * n   # sum_cells S e(+k.i/n)
        total += np.sum(c * m[v] * cell_int * dft[kx % n, ky % n])
    return total


def theorem_proxy(lam, preset, seed=0, modes=32, n_theta=8, length=PROXY_LENGTH):
    """|<C f, 1_E>| / (||f||_2 |E|^1/2) for the unit-scale operator on a torus of side `length`.

    f has `modes` frequencies with sup-norm in [lam, 2 lam); a is constant on cells of side
    length/n with n = lam/2; E = {Re(e^-i theta C f) > 0} for the best of n_theta angles.
    """
    lam = int(lam)
    rng = stream(seed, "proxy", lam, preset)
    n = max(lam // 2, 8)
    if preset == "locked":
        eta_k = int(round(1.5 * lam * length))
        kx, ky, c = np.array([-eta_k]), np.array([eta_k]), np.array([1.0 + 0j])
        levels = np.array([eta_k / length / 3.0])
        index = np.zeros((n, n), dtype=np.int64)
    else:
        kx, ky, c = _proxy_modes(rng, lam, modes, length)
        if preset == "degenerate":
            band_hi = 2 * lam * length
            while True:
                eta_k = int(rng.integers(int(lam * length), int(band_hi)))
                t0 = rng.uniform(0.6, 1.8)
                xi_k = -int(round(t0 * eta_k))
                if abs(xi_k) < band_hi:
                    break
            kx[0], ky[0] = xi_k, eta_k
            c[0] = 3.0 * np.sqrt(np.mean(np.abs(c) ** 2)) * c[0] / abs(c[0])
            xi, eta = xi_k / length, eta_k / length
            levels = np.array([-eta * eta / (3 * xi)])
            index = np.zeros((n, n), dtype=np.int64)
        elif preset == "random-sign":
            coarse = max(int(np.ceil(length * np.sqrt(lam))), 1)
            signs = rng.choice([0, 1], size=(coarse, coarse))
            rep = -(-n // coarse)
            index = np.repeat(np.repeat(signs, rep, 0), rep, 1)[:n, :n]
            levels = np.array([-float(lam), float(lam)])
        elif preset == "chirp":
            levels = np.linspace(-2.0 * lam, 2.0 * lam, 16)
            col = np.minimum((np.arange(n) * 16) // n, 15)
            index = np.repeat(col[:, None], n, axis=1)
        elif preset == "greedy":
            levels = np.linspace(-2.0 * lam, 2.0 * lam, 16)
            index = None
        else:
            raise ConfigError(f"unknown preset {preset!r}")
    if index is None:
        m = transform.rho_multiplier(kx / length, ky / length, levels)
        best = np.full((n, n), -1.0)
        Cf = np.zeros((n, n), dtype=complex)
        index = np.zeros((n, n), dtype=np.int64)
        for v in range(len(levels)):
            vals = _cells_from_modes(kx, ky, c * m[v], n)
            mag = np.abs(vals)
            better = mag > best
            best[better] = mag[better]
            Cf[better] = vals[better]
            index[better] = v
    else:
        Cf, m = _proxy_field(kx, ky, c, levels, index, n, length)
    h = length / n
    best_theta, best_val = 0.0, -1.0
    for theta in np.arange(n_theta) * 2 * np.pi / n_theta:
        E_th = np.real(np.exp(-1j * theta) * Cf) > 0
        approx = abs(np.sum(Cf[E_th])) * h * h / np.sqrt(max(E_th.sum(), 1) * h * h)
        if approx > best_val:
            best_theta, best_val = theta, approx
    E_cells = np.real(np.exp(-1j * best_theta) * Cf) > 0
    pairing = _proxy_pairing(kx, ky, c, m, index, E_cells, n, length)
    norm_f = length * float(np.sqrt(np.sum(np.abs(c) ** 2)))
    measure = float(E_cells.sum()) * h * h
    ratio = abs(pairing) / (norm_f * np.sqrt(measure)) if measure > 0 else 0.0
    return {"lambda": lam, "preset": preset, "pairing": abs(pairing), "norm_f": norm_f,
            "measure_E": measure, "ratio": ratio}


def decay_theorem_tasks(p):
    return [(int(lam), preset, p["seed"], p["modes"]) for lam in p["lams"] for preset in p["presets"]]


def decay_theorem_task(task):
    lam, preset, seed, modes = task
    return [theorem_proxy(lam, preset, seed, modes)]


def decay_theorem_finalize(p, rows):
    lams = sorted(set(r["lambda"] for r in rows))
    main = Table(["lambda", "preset", "pairing", "norm_f", "measure_E", "ratio"],
                 [(r["lambda"], r["preset"], r["pairing"], r["norm_f"], r["measure_E"], r["ratio"]) for r in rows])
    fits = Table(["series", "sigma_hat", "residual"])
    sup = [max(r["ratio"] for r in rows if r["lambda"] == lam) for lam in lams]
    series = [("sup", sup)] + [(pr, [r["ratio"] for lam in lams for r in rows
                                     if r["lambda"] == lam and r["preset"] == pr]) for pr in p["presets"]]
    passed, sup_fit = 0, None
    for name, vals in series:
        fit = _fit_or_nan(lams, vals)
        if fit is None:
            fits.rows.append((name, float("nan"), float("nan")))
            continue
        if name == "sup":
            sup_fit = fit
        fits.rows.append((name, fit.sigma_hat, fit.residual))
        passed += fit.sigma_hat > p["sigma_min"] and fit.residual < p["residual_max"]
    sigma = sup_fit.sigma_hat if sup_fit else float("nan")
    extra = {"sup_residual": sup_fit.residual if sup_fit else float("nan")}
    return Outcome({"decay_theorem.csv": main, "decay_theorem_fits.csv": fits}, sigma, int(passed),
                   len(series), extra)


# ---------------------------------------------------------------- model form

def modelform_instance(lam, seed=0, modes=16, length=2.0, density=0.4, n_levels=4, mother="spline"):
    """Random band-limited f, random cell set E and a rough a with n_levels values on the packet cells."""
    rng = stream(seed, "modelform", int(lam))
    family = gabor.WavePacketFamily(lam, mother=mother)
    # snap the box so it holds a whole number of packet cells (lambda need not be a square)
    length = round(length * np.sqrt(lam)) / np.sqrt(lam)
    P = family.cells(length)
    k = rng.integers(int(lam * length), int(2 * lam * length), size=(modes, 2)) * rng.choice([-1, 1], size=(modes, 2))
    spec = SparseSpectrum(k[:, 0], k[:, 1], rng.standard_normal(modes) + 1j * rng.standard_normal(modes), length)
    E = CellField((rng.random((P, P)) < density).astype(float), length)
    a = CellField(rng.choice(rng.uniform(-2 * lam, 2 * lam, n_levels), size=(P, P)), length)
    return family, spec, E, a


def modelform_point(lam, seed=0, N=10, u_cutoff=32, epsilon=modelform.EPSILON_DEFAULT, modes=16, length=2.0):
    family, spec, E, a = modelform_instance(lam, seed, modes, length)
    F = gabor.gabor_analyze_f(spec, lam, family)
    prov = gabor.LevelSliceProvider(E, a, lam, family, F.uv)
    part = modelform.build_partition(F, prov, spec, E, a, lam, N)
    split = modelform.split_Lambda(part, epsilon, N, u_cutoff)
    scale = spec.norm2() * np.sqrt(E.measure())
    res = split.total
    return {"lambda": int(lam), "value": res.value / scale, "error_bar": res.error_bar / scale,
            "SU": split.SU / scale, "UU": split.UU / scale, "SS": split.SS / scale,
            "flagged": bool(res.flagged), "chebyshev_ok": bool(part.chebyshev_ok()),
            "table": [(m, n, reg, int(cnt), val / scale) for (m, n, reg, val), cnt
                      in zip(split.rows(), _table_counts(part, split))]}


def _table_counts(part, split):
    fc, gc = part.f_counts(), part.g_counts()
    out = []
    for m, n, _, _ in split.rows():
        nf = int(fc[m].sum()) if m < len(fc) else 0
        ng = int(gc[n].sum()) if n < len(gc) else 0
        out.append(nf * ng)
    return out


def modelform_tasks(p):
    return [(int(lam), p["seed"], p["N"], p["u_cutoff"], p["epsilon"]) for lam in p["lams"]]


def modelform_task(task):
    lam, seed, N, u_cutoff, epsilon = task
    return [modelform_point(lam, seed, N, u_cutoff, epsilon)]


def modelform_finalize(p, rows):
    sweep = Table(["lambda", "value", "error_bar", "regime"])
    table = Table(["lambda", "m", "n", "regime", "count", "contribution"])
    for r in rows:
        sweep.rows.append((r["lambda"], r["value"], r["error_bar"], "total"))
        if r["flagged"]:
            sweep.flags.append((len(sweep.rows) - 1, "truncation tail above 1% of value"))
        for reg in modelform.REGIMES:
            sweep.rows.append((r["lambda"], r[reg], 0.0, reg))
        for m, n, reg, cnt, val in r["table"]:
            table.rows.append((r["lambda"], m, n, reg, cnt, val))
    fit = _fit_or_nan([r["lambda"] for r in rows], [r["value"] for r in rows])
    sigma = fit.sigma_hat if fit else float("nan")
    passed = sum(1 for r in rows if not r["flagged"] and r["chebyshev_ok"])
    return Outcome({"modelform_sweep.csv": sweep, "modelform_table.csv": table}, sigma, passed, len(rows),
                   {"residual": fit.residual if fit else float("nan")})


def modelform_oracle(lam, seed=0, N=10, modes=16, length=2.0):
    """Fast and brute-force evaluations of the same instance."""
    family, spec, E, a = modelform_instance(lam, seed, modes, length)
    F = gabor.gabor_analyze_f(spec, lam, family)
    fast = modelform.eval_Lambda(F, gabor.LevelSliceProvider(E, a, lam, family, F.uv), lam, N)
    brute = modelform.eval_Lambda_bruteforce(F, gabor.DirectSliceProvider(E, a, lam, family, F.uv), lam, N)
    return fast.value, brute


# ---------------------------------------------------------------- physical local model

def phys_local_point(lam, seed=0, N=10, box=2.0):
    rng = stream(seed, "phys-local", int(lam))
    M = int(np.ceil(box * np.sqrt(lam)))
    side = 2 * M + 1
    u, v, w = (lam * rng.choice([-1.0, 1.0], size=(side, side)) * rng.uniform(0.5, 2.0, size=(side, side))
               for _ in range(3))
    value, _, _ = modelform.phys_local_worst(u, v, w, lam, N)
    return {"lambda": int(lam), "value": value}


def phys_local_tasks(p):
    return [(int(lam), p["seed"], p["N"], p["box"]) for lam in p["lams"]]


def phys_local_task(task):
    return [phys_local_point(*task)]


def phys_local_finalize(p, rows):
    fit = _fit_or_nan([r["lambda"] for r in rows], [r["value"] for r in rows])
    sigma = fit.sigma_hat if fit else float("nan")
    t = Table(["lambda", "value", "fitted_sigma"], [(r["lambda"], r["value"], sigma) for r in rows])
    return Outcome({"phys_local.csv": t}, sigma, int(fit is not None and sigma > 0), 1)


# ---------------------------------------------------------------- kernel L1

KERNEL_PRESETS = {"random-sign": levelset.random_sign_spec, "locked": levelset.locked_sweep_spec}


def kernel_point(lam, preset="random-sign", seed=0, N=10, sampler="auto", step=1.0 / 256, count=10 ** 7):
    spec = KERNEL_PRESETS[preset](lam, seed, N)
    mode = sampler if sampler != "auto" else ("grid" if lam <= 2 ** 12 else "mc")
    samp = {"mode": "grid", "step": step} if mode == "grid" else {"mode": "mc", "count": count, "seed": seed}
    est = levelset.kernel_L1(spec, samp)
    return {"lambda": int(lam), "estimate": float(est.estimate), "error_bar": float(est.error_bar), "mode": est.mode}


def kernel_tasks(p):
    return [(int(lam), p["preset"], p["seed"], p["N"], p["sampler"], p["step"], p["count"]) for lam in p["lams"]]


def kernel_task(task):
    return [kernel_point(*task)]


def kernel_finalize(p, rows):
    fit = _fit_or_nan([r["lambda"] for r in rows], [r["estimate"] for r in rows])
    delta = fit.sigma_hat if fit else float("nan")
    t = Table(["lambda", "estimate", "error_bar", "fitted_delta"],
              [(r["lambda"], r["estimate"], r["error_bar"], delta) for r in rows])
    for i, r in enumerate(rows):
        if r["error_bar"] > 0.5 * r["estimate"]:
            t.flags.append((i, "error bar above half the estimate"))
    return Outcome({"kernel_l1.csv": t}, delta, int(fit is not None and delta > 0), 1,
                   {"residual": fit.residual if fit else float("nan")})


# ---------------------------------------------------------------- Van der Corput

def vdc_family(kind, lam):
    if kind == "linear":
        return levelset.PolySpec(1, 1, {(1,): float(lam)})
    if kind == "saddle":
        return levelset.PolySpec(2, 2, {(2, 0): float(lam), (0, 2): -float(lam)})
    raise ConfigError(f"unknown vdc family {kind!r}")


def vdc_tasks(p):
    if p["family"] == "random":
        per = 10
        return [("random", p["seed"], s, min(per, p["count"] - s)) for s in range(0, p["count"], per)]
    return [(p["family"], float(lam)) for lam in p["lams"]]


def vdc_task(task):
    out = []
    if task[0] == "random":
        _, seed, start, size = task
        for i in range(start, start + size):
            poly = levelset.random_polyspec(stream(seed, "vdc", i))
            out.append(_vdc_row(poly))
        return out
    return [_vdc_row(vdc_family(task[0], task[1]))]


def _vdc_row(poly):
    res = levelset.vdc_sublevel(poly)
    return {"l1_coeff_norm": poly.l1, "estimate": float(res.estimate), "bound": float(res.bound),
            "pass": bool(res.passed), "applicable": bool(res.applicable)}


def vdc_finalize(p, rows):
    t = Table(["l1_coeff_norm", "estimate", "bound", "pass"],
              [(r["l1_coeff_norm"], r["estimate"], r["bound"], int(r["pass"])) for r in rows])
    live = [r for r in rows if r["applicable"]]
    return Outcome({"vdc.csv": t}, float("nan"), sum(r["pass"] for r in live), len(live))


# ---------------------------------------------------------------- incidence

def incidence_levels(rng, m):
    """Level pair (l, s) with cardinalities 2^(2m-l), 2^(2m-s), at least 2 points each."""
    return (int(rng.integers(1, 2 * m - 1)), int(rng.integers(1, 2 * m - 1)))


def incidence_instance(m, seed, index):
    rng = stream(seed, "incidence", m, index)
    l, s = incidence_levels(rng, m)
    inst = incidence.random_instance(m, 1 << (2 * m - l), 1 << (2 * m - s),
                                     seed=[int(seed), zlib.crc32(repr(("inc", m, index)).encode())])
    inst.meta.update(l=l, s=s, index=index)
    return inst


def incidence_row(inst, method="fast"):
    obs = incidence.count_incidences(inst, method)
    bounds = incidence.incidence_bounds(inst, observed=obs)
    imp = incidence.lp_improving_form(inst.A, inst.B, inst.m, observed=obs)
    return {"m": inst.m, "l": inst.meta["l"], "s": inst.meta["s"], "observed": obs,
            "trivial": bounds.trivial, "cs": bounds.cs, "bound58": imp.bound58,
            "pass": bool(bounds.passed and imp.pass58)}


def incidence_tasks(p):
    per = 50
    return [(m, p["seed"], s, min(per, p["count"] - s), p["method"], p.get("instances_dir"))
            for m in p["ms"] for s in range(0, p["count"], per)]


def incidence_task(task):
    m, seed, start, size, method, inst_dir = task
    rows = []
    for i in range(start, start + size):
        inst = incidence_instance(m, seed, i)
        if inst_dir:
            inst.write(f"{inst_dir}/m{m}_{i:05d}.txt")
        rows.append(incidence_row(inst, method))
    return rows


def incidence_finalize(p, rows):
    t = Table(["m", "l", "s", "observed", "trivial", "cs", "bound58", "pass"],
              [(r["m"], r["l"], r["s"], r["observed"], r["trivial"], r["cs"], r["bound58"], int(r["pass"]))
               for r in rows])
    return Outcome({"incidence.csv": t}, float("nan"), sum(r["pass"] for r in rows), len(rows))


# ---------------------------------------------------------------- symbol decay

def symbol_point(j3):
    """|m_j| at the stationary configuration xi = eta = a = 2^j3 with j = (j3, j3, j3)."""
    val = 2.0 ** j3
    try:
        m = transform.symbol_m((j3, j3, j3), val, val, val)
        flag = ""
    except AccuracyError as exc:
        m, flag = exc.estimate, "quadrature did not converge"
    return {"j3": int(j3), "abs_m": float(abs(m)), "flag": flag}


def symbol_tasks(p):
    return [(int(j),) for j in p["j3s"]]


def symbol_task(task):
    return [symbol_point(task[0])]


def symbol_finalize(p, rows):
    j = np.array([r["j3"] for r in rows], dtype=float)
    y = np.log2([r["abs_m"] for r in rows])
    slope = float(np.polyfit(j, y, 1)[0]) if len(rows) >= 2 else float("nan")
    t = Table(["j3", "abs_m", "fitted_slope"], [(r["j3"], r["abs_m"], slope) for r in rows])
    t.flags = [(i, r["flag"]) for i, r in enumerate(rows) if r["flag"]]
    ok = int(p["slope_lo"] <= slope <= p["slope_hi"])
    return Outcome({"symbol_decay.csv": t}, slope, ok, 1)


# ---------------------------------------------------------------- frame checks

def frame_input(lam, index, seed=0, modes=64):
    """Input with spectrum in [-2 lam, 2 lam]^2 minus [-lam, lam]^2, on a torus small enough to sample exactly."""
    length = min(1.0, 512.0 / (2 * lam))
    rng = stream(seed, "frame", int(lam), index)
    kmax = int(2 * lam * length)
    k = rng.integers(-kmax + 1, kmax, size=(4 * modes, 2))
    k = k[np.abs(k).max(axis=1) > kmax // 2]
    k = np.unique(k[:modes], axis=0)
    c = rng.standard_normal(len(k)) + 1j * rng.standard_normal(len(k))
    return SparseSpectrum(k[:, 0], k[:, 1], c, length)


def frame_point(lam, index, seed=0, mother="frame"):
    spec = frame_input(lam, index, seed)
    family = gabor.WavePacketFamily(lam, mother=mother)
    F = gabor.gabor_analyze_f(spec, lam, family, tau_drop=0.0)
    norm2 = spec.norm2() ** 2
    n = 2048
    grid = Grid2D(n, n, spec.length / n, spec.length / n)
    samples = np.zeros((n, n), dtype=complex)
    np.add.at(samples, (spec.kx % n, spec.ky % n), spec.coeffs)
    samples = np.fft.ifft2(samples) * n * n
    f = SampledField2D(grid, samples)
    spatial = f.norm2() ** 2
    spectral = grid.cell_area * np.sum(np.abs(np.fft.fft2(samples)) ** 2) / (n * n)
    parseval = max(abs(spatial - norm2), abs(spectral - norm2)) / norm2
    return {"lambda": int(lam), "input": int(index), "bessel_ratio": F.total_mass() / norm2,
            "parseval_error": float(parseval)}


def frame_tasks(p):
    return [(int(lam), i, p["seed"]) for lam in p["lams"] for i in range(p["count"])]


def frame_task(task):
    return [frame_point(*task)]


def frame_finalize(p, rows):
    t = Table(["lambda", "input", "bessel_ratio", "parseval_error"],
              [(r["lambda"], r["input"], r["bessel_ratio"], r["parseval_error"]) for r in rows])
    ok = sum(1 for r in rows if 0 < r["bessel_ratio"] <= p["C_bessel"] and r["parseval_error"] <= 1e-10)
    return Outcome({"frame.csv": t}, max(r["bessel_ratio"] for r in rows), ok, len(rows))


# ---------------------------------------------------------------- pointwise domination

def domination_grid(n=256, length=16.0):
    return Grid2D.centered(n, length)


def band_limited_field(grid, band, rng):
    fx, fy = grid.frequencies()
    sel = (np.abs(fx)[:, None] <= band) & (np.abs(fy)[None, :] <= band)
    spec = np.zeros(grid.shape, dtype=complex)
    spec[sel] = rng.standard_normal(sel.sum()) + 1j * rng.standard_normal(sel.sum())
    return SampledField2D(grid, np.fft.ifft2(spec))


def rough_a(grid, rng, levels=8, cells=16, amax=600.0):
    vals = rng.choice(rng.uniform(-amax, amax, levels), size=(cells, cells))
    rep = grid.nx // cells
    return SampledField2D(grid, np.repeat(np.repeat(vals, rep, 0), rep, 1).astype(complex))


def domination_point(index, seed=0, n=256, length=16.0, band=4.0, k_max=3, r_max=2.0, levels=8, amax=600.0):
    g = domination_grid(n, length)
    rng = stream(seed, "domination", index)
    f = band_limited_field(g, band, rng)
    a = rough_a(g, rng, levels, amax=amax)
    Ms = maximal_strong(f)
    MpMs = maximal_parabola(Ms, r_max).data.real
    low_ref = hilbert_star_parabola(f, r_max).data.real + maximal_parabola(f, r_max).data.real
    cache = {}
    ks = range(0, k_max + 1)
    CL = transform.decompose_apply(f, a, "L", ks, cache=cache)
    out = {"input": int(index), "ratio_low": float(np.max(np.abs(CL.data) / (low_ref + 1e-12)))}
    for part, name in (("HNS", "ratio_ns"), ("HS", "ratio_s")):
        C = transform.decompose_apply(f, a, part, ks, cache=cache)
        out[name] = float(np.max(np.abs(C.data) / (MpMs + 1e-12)))
    return out


def jns_point(j3, seed=0, n=256, length=16.0, band=4.0):
    """||C_j f||_inf / ||M_str f||_inf for j = (0, 0, j3) at k = 0 with a = 1.5 2^j3."""
    g = domination_grid(n, length)
    f = band_limited_field(g, band, stream(seed, "jns"))
    a = SampledField2D(g, np.full(g.shape, 1.5 * 2.0 ** j3, dtype=complex))
    C = transform.decompose_apply(f, a, (0, 0, int(j3)), [0])
    return {"j3": int(j3), "ratio": float(np.max(np.abs(C.data)) / np.max(maximal_strong(f).data.real))}


def domination_tasks(p):
    return [("corpus", i, p["seed"]) for i in range(p["count"])] + [("jns", j, p["seed"]) for j in p["j3s"]]


def domination_task(task):
    kind, idx, seed = task
    if kind == "corpus":
        return [dict(domination_point(idx, seed), kind="corpus")]
    return [dict(jns_point(idx, seed), kind="jns")]


def domination_finalize(p, rows):
    corpus = [r for r in rows if r["kind"] == "corpus"]
    jns = [r for r in rows if r["kind"] == "jns"]
    t1 = Table(["input", "ratio_low", "ratio_ns", "ratio_s"],
               [(r["input"], r["ratio_low"], r["ratio_ns"], r["ratio_s"]) for r in corpus])
    slope = float("nan")
    if len(jns) >= 2:
        slope = float(np.polyfit([r["j3"] for r in jns], np.log2([r["ratio"] for r in jns]), 1)[0])
    t2 = Table(["j3", "ratio", "fitted_slope"], [(r["j3"], r["ratio"], slope) for r in jns])
    ok = sum(1 for r in corpus if r["ratio_low"] <= p["C_low"] and max(r["ratio_ns"], r["ratio_s"]) <= p["C_high"])
    ok += int(slope <= p["slope_max"])
    return Outcome({"domination.csv": t1, "domination_jns.csv": t2}, slope, ok, len(corpus) + 1,
                   {"max_low": max((r["ratio_low"] for r in corpus), default=float("nan")),
                    "max_high": max((max(r["ratio_ns"], r["ratio_s"]) for r in corpus), default=float("nan"))})


# ---------------------------------------------------------------- registry

@dataclass(frozen=True)
class Experiment:
    name: str
    schema: dict          # key -> (type, default or REQUIRED)
    tasks: object
    task: object
    finalize: object
    gabor: bool = False


REQUIRED = object()
LIST_INT = "list[int]"
LIST_FLOAT = "list[float]"
LIST_STR = "list[str]"

EXPERIMENTS = {
    "decay-theorem": Experiment("decay-theorem", {
        "lams": (LIST_INT, REQUIRED), "presets": (LIST_STR, list(PROXY_PRESETS)), "seed": (int, 0),
        "modes": (int, 32), "sigma_min": (float, 0.02), "residual_max": (float, 0.1)},
        decay_theorem_tasks, decay_theorem_task, decay_theorem_finalize),
    "modelform-dichotomy": Experiment("modelform-dichotomy", {
        "lams": (LIST_INT, REQUIRED), "seed": (int, 0), "N": (int, 10), "u_cutoff": (float, 32.0),
        "epsilon": (float, modelform.EPSILON_DEFAULT)},
        modelform_tasks, modelform_task, modelform_finalize, gabor=True),
    "kernel-l1": Experiment("kernel-l1", {
        "lams": (LIST_INT, REQUIRED), "preset": (str, "random-sign"), "seed": (int, 0), "N": (int, 10),
        "sampler": (str, "auto"), "step": (float, 1.0 / 256), "count": (int, 10 ** 7)},
        kernel_tasks, kernel_task, kernel_finalize),
    "vdc": Experiment("vdc", {
        "family": (str, "linear"), "lams": (LIST_FLOAT, [16.0]), "count": (int, 100), "seed": (int, 0)},
        vdc_tasks, vdc_task, vdc_finalize),
    "incidence": Experiment("incidence", {
        "ms": (LIST_INT, REQUIRED), "count": (int, 100), "seed": (int, 0), "method": (str, "fast"),
        "write_instances": (bool, False)},
        incidence_tasks, incidence_task, incidence_finalize),
    "symbol-decay": Experiment("symbol-decay", {
        "j3s": (LIST_INT, list(range(6, 15))), "slope_lo": (float, -0.6), "slope_hi": (float, -0.4)},
        symbol_tasks, symbol_task, symbol_finalize),
    "phys-local": Experiment("phys-local", {
        "lams": (LIST_INT, REQUIRED), "seed": (int, 0), "N": (int, 10), "box": (float, 2.0)},
        phys_local_tasks, phys_local_task, phys_local_finalize, gabor=True),
    "frame": Experiment("frame", {
        "lams": (LIST_INT, [256, 1024]), "count": (int, 20), "seed": (int, 0), "C_bessel": (float, 4.0)},
        frame_tasks, frame_task, frame_finalize, gabor=True),
    "domination": Experiment("domination", {
        "count": (int, 20), "j3s": (LIST_INT, list(range(4, 11))), "seed": (int, 0),
        "C_low": (float, 50.0), "C_high": (float, 100.0), "slope_max": (float, -2.0)},
        domination_tasks, domination_task, domination_finalize),
}


def run_serial(name, params):
    """Run every task in order in this process and finalize (used by tests)."""
    exp = EXPERIMENTS[name]
    params = {**{k: d for k, (_, d) in exp.schema.items() if d is not REQUIRED}, **params}
    rows = []
    for task in exp.tasks(params):
        rows.extend(exp.task(task))
    return exp.finalize(params, rows)
