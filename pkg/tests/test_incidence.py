from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lgc_lab import DomainError
from lgc_lab import incidence as I
from lgc_lab.experiments import incidence_instance, incidence_row
from lgc_lab.fields import Grid2D, SampledField2D


def full_grid(m):
    side = 1 << m
    pts = np.stack(np.meshgrid(np.arange(1, side + 1), np.arange(1, side + 1), indexing="ij"), -1).reshape(-1, 2)
    return pts


def test_probe_rounding():
    q, s = I.probe_offsets(3)
    # q^2 / 8 for q = 1..8: 0.125 .. 8, halves rounded up (q = 2 gives 0.5 -> 1)
    assert list(s) == [0, 1, 1, 2, 3, 5, 6, 8]


def test_instance_invariants():
    inst = I.IncidenceInstance(3, np.array([[1, 1], [1, 1], [8, 2]]), np.zeros((0, 2)))
    assert len(inst.A) == 2
    assert inst.level("A") == Fraction(5)
    assert inst.level("B") == float("inf")
    with pytest.raises(DomainError):
        I.IncidenceInstance(3, np.array([[0, 1]]), np.zeros((0, 2)))


def test_count_examples():
    m = 5
    empty = I.IncidenceInstance(m, np.zeros((0, 2)), full_grid(m))
    assert I.count_incidences(empty) == 0 and I.count_incidences(empty, "brute") == 0
    full = I.IncidenceInstance(m, full_grid(m), full_grid(m))
    assert I.count_incidences(full) == 2 ** (3 * m)
    single = I.IncidenceInstance(m, np.array([[1, 1]]), I.parabola_cells((1, 1), m))
    assert I.count_incidences(single) == 2 ** m == I.count_incidences(single, "brute")


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 31), st.floats(0.001, 0.5), st.floats(0.001, 0.5))
def test_fast_equals_brute(m, seed, fa, fb):
    side2 = 4 ** m
    inst = I.random_instance(m, max(1, int(fa * side2)), max(1, int(fb * side2)), seed=seed)
    assert I.count_incidences(inst, "fast") == I.count_incidences(inst, "brute")


def test_instance_roundtrip(tmp_path):
    inst = I.random_instance(6, 50, 70, seed=3)
    path = tmp_path / "inst.txt"
    inst.write(path)
    back = I.read_instance(path)
    assert back.m == 6 and np.array_equal(back.A, inst.A) and np.array_equal(back.B, inst.B)


def test_random_instance_deterministic():
    a = I.random_instance(7, 100, 200, seed=[4, 9])
    b = I.random_instance(7, 100, 200, seed=[4, 9])
    assert np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B)
    assert len(a.A) == 100 and len(a.B) == 200


def test_pair_overlap_examples():
    m = 10
    side = 1 << m
    with pytest.raises(DomainError):
        I.pair_overlap((3, 3), (3, 3), m)
    far, bound = I.pair_overlap((1, 1), (1, 1 + side // 2), m)
    assert bound == pytest.approx(I.C_GEO * side / (side // 2 + 1))
    assert far <= 2 * I.C_GEO
    near, bound = I.pair_overlap((1, 1), (1, 2), m)
    assert near <= I.C_GEO * 2 ** (m - 1) and bound - near > 0


def test_pair_overlap_enumeration():
    # direct set intersection of the two cell lists
    m = 6
    P, R = (5, 9), (12, 3)
    cp = {tuple(c) for c in I.parabola_cells(P, m)}
    cr = {tuple(c) for c in I.parabola_cells(R, m)}
    overlap, _ = I.pair_overlap(P, R, m)
    assert overlap == sum(1 for c in map(tuple, I.parabola_cells(P, m)) if c in cr)
    assert len(cp) == 2 ** m


def test_pair_overlap_random_pairs():
    m = 10
    rng = np.random.default_rng(0)
    for _ in range(1000):
        P, R = rng.integers(1, 2 ** m + 1, size=(2, 2))
        if tuple(P) == tuple(R):
            continue
        overlap, bound = I.pair_overlap(P, R, m)
        assert overlap <= bound


def test_torus_distance():
    assert I.torus_distance((1, 1), (1, 1024), 10) == 1
    assert I.torus_distance((1, 1), (513, 200), 10) == 512


def test_bounds_examples():
    m = 5
    full = I.IncidenceInstance(m, full_grid(m), full_grid(m))
    rep = I.incidence_bounds(full)
    assert rep.observed == 2 ** (3 * m) == rep.trivial and rep.passed
    for seed in range(5):
        inst = I.random_instance(10, 2 ** 10, 2 ** 10, seed=seed)
        assert I.incidence_bounds(inst).passed


def test_bounds_adversarial_union():
    m = 8
    rng = np.random.default_rng(1)
    A = np.unique(rng.integers(1, 2 ** m + 1, size=(16, 2)), axis=0)
    B = I.parabola_image(A, m)
    inst = I.IncidenceInstance(m, A, B)
    rep = I.incidence_bounds(inst)
    assert rep.observed >= 2 ** m * len(A) // 2
    assert rep.observed <= rep.cs and rep.passed


def test_chain_audits():
    for m in range(3, 9):
        for seed in range(3):
            inst = I.random_instance(m, 3 * m, 4 ** m // 3, seed=[m, seed])
            audit = I.chain_audit(inst)
            assert audit["I"] == I.count_incidences(inst, "brute")
            assert audit["i1"]
            ok, lhs, rhs = I.i2_audit(inst)
            assert ok and lhs <= rhs


def test_i2_pair_sum_by_loops():
    m = 4
    inst = I.random_instance(m, 6, 100, seed=11)
    bset = {tuple(b) for b in inst.B}
    total = 0
    for P in inst.A:
        hp = {tuple(c) for c in I.parabola_cells(P, m)} & bset
        for R in inst.A:
            total += len(hp & ({tuple(c) for c in I.parabola_cells(R, m)} & bset))
    assert I.pair_sum_exhaustive(inst) == total


def test_improving_form_examples():
    m = 6
    empty = I.lp_improving_form(np.zeros((0, 2)), full_grid(m), m)
    assert empty.value == 0 and empty.pass58
    box = I.lp_improving_form(full_grid(m), full_grid(m), m)
    assert box.value == pytest.approx(1.0) and box.bound58 == box.bound23 == I.C_58 and box.pass58


def test_improving_form_sweep_m10():
    # the 2/3 bound is reported alongside and not asserted
    rows = [incidence_row(incidence_instance(10, 0, i)) for i in range(60)]
    assert all(r["pass"] for r in rows)
    inst = incidence_instance(10, 0, 0)
    rep = I.lp_improving_form(inst.A, inst.B, 10)
    assert rep.bound23 <= rep.bound58


def test_dichotomy_constant_field():
    g = Grid2D(64, 64, 1 / 64, 1 / 64)
    f = SampledField2D(g, np.full(g.shape, 2.0 + 0j))
    f_U, f_S, rep = I.spatial_dichotomy(f, 16, 0.04)
    assert np.all(rep["levels"] == 0)
    assert np.all(f_S.data == 0) and np.array_equal(f_U.data, f.data)


def test_dichotomy_spike():
    g = Grid2D(64, 64, 1 / 64, 1 / 64)
    data = np.zeros(g.shape, complex)
    data[10, 20] = 1.0
    f = SampledField2D(g, data)
    m = 4
    f_U, f_S, rep = I.spatial_dichotomy(f, 2 ** m, 0.04)
    assert rep["levels"][10 // 4, 20 // 4] == 2 * m      # 64 samples, 16 x 16 cells
    assert f_S.data[10, 20] == 1.0 and np.all(f_U.data == 0)
    assert np.max(np.abs(f.data - f_U.data - f_S.data)) == 0
    bumpy = data + 0.01
    f_U, f_S, rep = I.spatial_dichotomy(f.with_data(bumpy), 2 ** m, 0.04)
    assert rep["sup_uniform"] <= rep["sup_cap"]
    assert np.max(np.abs(bumpy - f_U.data - f_S.data)) == 0
    assert rep["sparse_majorant"] <= rep["bound58_sum"]
