"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run alone with `pytest tests/test_acceptance.py -s` or `python tests/test_acceptance.py`.
"""
import os
import sys
import time

import numpy as np

from lgc_lab import cli, experiments as X
from lgc_lab import incidence as I
from lgc_lab import levelset as LS


def test_criterion_1_frame(report):
    t0 = time.time()
    out = X.run_serial("frame", {"lams": [256, 1024], "count": 20})
    rows = out.tables["frame.csv"].rows
    ratios = [r[2] for r in rows]
    parseval = max(r[3] for r in rows)
    elapsed = time.time() - t0
    ok = (len(rows) == 40 and all(0 < b <= 4.0 for b in ratios) and parseval <= 1e-10 and elapsed < 120)
    report(1, ok, f"bessel in [{min(ratios):.3g}, {max(ratios):.3g}], parseval {parseval:.2g}, {elapsed:.0f}s")
    assert ok


def test_criterion_2_domination(report):
    t0 = time.time()
    out = X.run_serial("domination", {"count": 20, "j3s": list(range(4, 11))})
    elapsed = time.time() - t0
    max_low, max_high, slope = out.extra["max_low"], out.extra["max_high"], out.fitted_exponent
    ok = max_low <= 50 and max_high <= 100 and slope <= -2 and elapsed < 300
    report(2, ok, f"max low {max_low:.3g}, max high {max_high:.3g}, jns slope {slope:.3g}, {elapsed:.0f}s")
    assert ok


def test_criterion_3_symbol_slope(report):
    t0 = time.time()
    out = X.run_serial("symbol-decay", {"j3s": list(range(6, 15))})
    elapsed = time.time() - t0
    slope = out.fitted_exponent
    unconverged = len(out.tables["symbol_decay.csv"].flags)
    ok = -0.6 <= slope <= -0.4 and unconverged == 0 and elapsed < 60
    report(3, ok, f"slope {slope:.4f}, {unconverged} unconverged, {elapsed:.0f}s")
    assert ok


def test_criterion_4_theorem_proxy(report):
    t0 = time.time()
    out = X.run_serial("decay-theorem", {"lams": [2 ** k for k in range(8, 13)]})
    elapsed = time.time() - t0
    sigma, residual = out.fitted_exponent, out.extra["sup_residual"]
    ok = sigma > 0.02 and residual < 0.1 and len(out.tables["decay_theorem.csv"].rows) == 25 and elapsed < 1800
    report(4, ok, f"sup series sigma {sigma:.3f}, residual {residual:.2g}, {elapsed:.0f}s")
    assert ok


def test_criterion_5_modelform(report):
    t0 = time.time()
    fast, brute = X.modelform_oracle(64)
    rel = abs(fast - brute) / abs(brute)
    rows = [X.modelform_point(2 ** k) for k in range(8, 13)]
    split_err = max(abs(r["SU"] + r["UU"] + r["SS"] - r["value"]) / abs(r["value"]) for r in rows)
    out = X.modelform_finalize({}, rows)
    elapsed = time.time() - t0
    sigma = out.fitted_exponent
    ok = rel <= 1e-3 and split_err <= 1e-9 and sigma > 0 and elapsed < 2700
    report(5, ok, f"brute rel {rel:.2g}, split {split_err:.2g}, sigma {sigma:.3f}, {elapsed:.0f}s")
    assert ok


def test_criterion_6_levelset(report):
    t0 = time.time()
    built, closed = LS.det_MY([1.0, 2.0, 3.0])
    det_ok = closed == 10368 and abs(built - 10368) <= 1e-9 * 10368
    rng = np.random.default_rng(6)
    det_err = coeff_err = 0.0
    for _ in range(999):
        Y = rng.uniform(0.05, 1.0, 3)
        built, closed = LS.det_MY(Y)
        det_err = max(det_err, abs(built - closed) / abs(closed))
        U, V = rng.standard_normal((2, 3))
        C = LS.coeff_vector(Y, U, V)
        for x in np.linspace(-1.5, 1.5, 7):
            scale = np.sum(np.abs(C)) * max(1.0, abs(x)) ** 5
            coeff_err = max(coeff_err, abs(np.polyval(C[::-1], x) - LS.wedge_polynomial(x, Y, U, V)) / scale)
    kernel = X.run_serial("kernel-l1", {"lams": [2 ** k for k in range(6, 17)], "preset": "random-sign"})
    vdc = X.run_serial("vdc", {"family": "random", "count": 200})
    elapsed = time.time() - t0
    delta = kernel.fitted_exponent
    ok = (det_ok and det_err <= 1e-9 and coeff_err <= 1e-9 and delta > 0
          and vdc.total > 0 and vdc.pass_count == vdc.total and elapsed < 900)
    report(6, ok, f"det {det_err:.2g}, coeff {coeff_err:.2g}, delta {delta:.3f}, "
                  f"vdc {vdc.pass_count}/{vdc.total}, {elapsed:.0f}s")
    assert ok


def test_criterion_7_incidence(report):
    t0 = time.time()
    mismatches = 0
    for m in range(2, 9):
        for i in range(10):
            inst = X.incidence_instance(m, 7, i)
            mismatches += I.count_incidences(inst, "fast") != I.count_incidences(inst, "brute")
    out = X.run_serial("incidence", {"ms": [6, 7, 8, 9, 10], "count": 1000})
    rng = np.random.default_rng(7)
    pairs = overlap_fail = 0
    while pairs < 1000:
        P, R = rng.integers(1, 2 ** 10 + 1, size=(2, 2))
        if tuple(P) == tuple(R):
            continue
        overlap, bound = I.pair_overlap(P, R, 10)
        overlap_fail += overlap > bound
        pairs += 1
    audit_fail = 0
    for m in range(3, 9):
        for seed in range(3):
            inst = I.random_instance(m, 3 * m, 4 ** m // 3, seed=[m, seed])
            audit = I.chain_audit(inst)
            audit_fail += not (audit["i1"] and audit["I"] == I.count_incidences(inst, "brute"))
            audit_fail += not I.i2_audit(inst)[0]
    elapsed = time.time() - t0
    ok = (mismatches == 0 and out.total == 5000 and out.pass_count == out.total
          and overlap_fail == 0 and audit_fail == 0 and elapsed < 600)
    report(7, ok, f"fast/brute mismatches {mismatches}, 5/8 bound {out.pass_count}/{out.total}, "
                  f"overlap failures {overlap_fail}, audit failures {audit_fail}, {elapsed:.0f}s")
    assert ok


DETERMINISM_CONFIGS = {
    "decay-theorem": "lams = 256, 512",
    "modelform-dichotomy": "lams = 256, 512",
    "kernel-l1": "lams = 64, 128",
    "vdc": "family = random\ncount = 30",
    "incidence": "ms = 6, 7\ncount = 40",
    "symbol-decay": "j3s = 6, 7, 8",
    "phys-local": "lams = 256, 1024",
    "frame": "lams = 256\ncount = 4",
    "domination": "count = 2\nj3s = 4, 5",
}


def test_criterion_8_determinism(report, tmp_path):
    t0 = time.time()
    differing = []
    for name, body in DETERMINISM_CONFIGS.items():
        raw, errors = cli.read_config_text(f"experiment = {name}\n{body}\n")
        outputs = {}
        for workers in (1, 4):
            cfg = cli.validate_config({**raw, "out": str(tmp_path / f"{name}-{workers}")}, errors)
            _, _, out = cli.run(cfg, workers=workers, log=lambda *_: None)
            outputs[workers] = {f: open(os.path.join(out, f), "rb").read()
                                for f in sorted(os.listdir(out)) if f.endswith(".csv")}
        if not outputs[1] or outputs[1] != outputs[4]:
            differing.append(name)
    elapsed = time.time() - t0
    ok = not differing
    report(8, ok, f"{len(DETERMINISM_CONFIGS) - len(differing)}/{len(DETERMINISM_CONFIGS)} experiments "
                  f"byte-identical at workers 1 and 4, {elapsed:.0f}s")
    assert ok, differing


if __name__ == "__main__":
    import pytest
    sys.exit(pytest.main([__file__, "-s", "-q"]))
