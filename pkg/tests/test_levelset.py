import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lgc_lab import ConfigError, DomainError
from lgc_lab import levelset as LS


def bracket(x):
    return np.sqrt(1 + x * x)


def test_jap_product_examples():
    assert LS.jap_product_check(0.0, 0.0, 1, 1) == pytest.approx(1.0)
    for x in (0.5, 3.0, 100.0):
        assert LS.jap_product_check(x, -x, 1, 1) == pytest.approx(2 / bracket(x) - 1 / bracket(x) ** 2)
    with pytest.raises(DomainError):
        LS.jap_product_check(1.0, 2.0, 0, 0)


def test_jap_product_sweep():
    rng = np.random.default_rng(0)
    worst = np.inf
    for _ in range(100000):
        x, y = rng.standard_normal(2) * 10.0 ** rng.uniform(-2, 4, 2)
        a, b = rng.standard_normal(2)
        worst = min(worst, LS.jap_product_check(x, y, a, b))
    assert worst >= 0


def test_jap_product_vectors():
    rng = np.random.default_rng(1)
    for _ in range(200):
        x, y = rng.standard_normal((2, 3)) * 50
        assert LS.jap_product_check(x, y, *rng.standard_normal(2)) >= 0


def cofactor_det(M):
    M = [[float(v) for v in row] for row in M]
    return (M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
            - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
            + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]))


def test_wedge_examples():
    assert LS.wedge_det(4, 2, 3, [0.7, 0.7, 0.2]) == 0
    assert LS.wedge_det(0, 1, 2, [1, 2, 3]) == pytest.approx(2.0, rel=1e-14)
    Y = [1.0, 2.0, 3.0]
    ref = cofactor_det([[y ** 4, y ** 2, y ** 3] for y in Y])
    assert LS.wedge_det(4, 2, 3, Y) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(DomainError):
        LS.wedge_det(0.5, 1, 2, [-1.0, 2.0, 3.0])


def test_det_MY_examples():
    with pytest.raises(LS.SingularSystemError) as info:
        LS.det_MY([1.0, 1.0, 1.0])
    assert info.value.closed_form == 0
    built, closed = LS.det_MY([1.0, 2.0, 3.0])
    assert closed == 10368
    assert built == pytest.approx(10368, rel=1e-9)


def test_det_MY_sweep():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        Y = rng.uniform(0.05, 1.0, 3)
        built, closed = LS.det_MY(Y)
        assert abs(built - closed) <= 1e-9 * abs(closed)
        assert np.allclose(LS.M_Y_constructed(Y), LS.M_Y(Y), rtol=1e-8, atol=1e-12)


def test_coeff_vector_structure():
    Y = np.array([0.3, 0.5, 0.9])
    assert np.all(LS.coeff_vector(Y, np.zeros(3), np.zeros(3)) == 0)
    C = LS.coeff_vector(Y, np.array([1.0, -2.0, 0.5]), np.zeros(3))
    assert np.all(C[0::2] == 0) and np.any(C[1::2] != 0)


def test_coeff_vector_against_wedge():
    rng = np.random.default_rng(3)
    for _ in range(200):
        Y = rng.uniform(0.05, 1.0, 3)
        U, V = rng.standard_normal((2, 3))
        C = LS.coeff_vector(Y, U, V)
        for x in np.linspace(-1.5, 1.5, 7):
            direct = LS.wedge_polynomial(x, Y, U, V)
            poly = np.polyval(C[::-1], x)
            scale = np.sum(np.abs(C)) * max(1.0, abs(x)) ** 5
            assert abs(poly - direct) <= 1e-9 * scale


def test_singular_value_sandwich():
    # on (0, 1]^3 the block determinant sits near lam^-1.5 at lam = 2^20, so each Y is tested
    # at the smallest epsilon for which the hypothesis det >= lam^-eps holds
    rng = np.random.default_rng(4)
    lam = 2.0 ** 20
    c = LS.SINGULAR_CEILING ** -5
    for _ in range(1000):
        Y = rng.uniform(0.05, 1.0, 3)
        B = LS.block_matrix(Y)
        sv = np.linalg.svd(B, compute_uv=False)
        assert sv[0] <= LS.SINGULAR_CEILING
        det = LS.det_MY_closed(Y) ** 2 * np.prod(Y)
        assert abs(np.linalg.det(B)) == pytest.approx(det, rel=1e-6)
        eps = -np.log(det) / np.log(lam)
        assert LS.smallest_singular_value(Y) >= c * lam ** -eps * (1 - 1e-9)
        U, V = rng.standard_normal((2, 3))
        scale = lam / np.linalg.norm(np.concatenate([U, V]))
        C = LS.coeff_vector(Y, U * scale, V * scale)
        assert np.sum(np.abs(C)) >= c * lam ** (1 - eps) * (1 - 1e-9)


def test_vdc_linear():
    for lam in (10.0, 1e3, 1e6):
        res = LS.vdc_sublevel(LS.PolySpec(1, 1, {(1,): lam}))
        assert res.estimate == pytest.approx(2 * np.arcsinh(lam) / lam, rel=1e-8)
        assert res.passed and res.bound == pytest.approx(64 * bracket(lam) ** -0.25)


def test_vdc_zero_polynomial():
    res = LS.vdc_sublevel(LS.PolySpec(2, 3, {}))
    assert res.estimate == 4 and not res.applicable


def test_vdc_constant_branch():
    res = LS.vdc_sublevel(LS.PolySpec(2, 2, {(0, 0): 5.0}))
    assert res.estimate == pytest.approx(4 / bracket(5.0))


def saddle(lam):
    return LS.PolySpec(2, 2, {(2, 0): lam, (0, 2): -lam})


def saddle_oracle(lam, ny=2000):
    ys = -1 + (np.arange(ny) + 0.5) * 2 / ny
    inner = [quad(lambda x: 1 / np.sqrt(1 + lam ** 2 * (x * x - y * y) ** 2), -1, 1,
                  points=[-abs(y), abs(y)], limit=200, epsabs=1e-13)[0] for y in ys]
    return float(np.sum(inner) * 2 / ny)


@pytest.mark.parametrize("lam", [2.0 ** 4, 2.0 ** 8])
def test_vdc_saddle_oracle(lam):
    est = LS.vdc_sublevel(saddle(lam)).estimate
    assert est == pytest.approx(saddle_oracle(lam), rel=2e-3)


def test_vdc_saddle_bound():
    for k in range(4, 21, 2):
        lam = 2.0 ** k
        res = LS.vdc_sublevel(saddle(lam))
        assert res.estimate <= 64 * bracket(2 * lam) ** (-1 / 6)


def test_vdc_random_corpus():
    rng = np.random.default_rng(5)
    results = [LS.vdc_sublevel(LS.random_polyspec(rng)) for _ in range(40)]
    assert all(r.passed for r in results if r.applicable)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 1e4), st.floats(-1e4, 1e4))
def test_sublevel_line_against_quad(a, b):
    poly = LS.PolySpec(1, 2, {(2,): a, (1,): b, (0,): 0.3})
    near = sorted(r.real for r in np.roots([a, b, 0.3]) if abs(r.real) < 1) or None
    ref = quad(lambda x: 1 / np.sqrt(1 + (a * x * x + b * x + 0.3) ** 2), -1, 1, limit=500,
               points=near, epsabs=1e-13)[0]
    assert LS.sublevel_l1(poly) == pytest.approx(ref, rel=1e-6)


def test_kernel_plumbing():
    zero = LS.constant_kernel_spec(64.0)
    assert LS.kernel_L1(zero, {"mode": "grid", "step": 1 / 32}, validate=False).estimate == pytest.approx(6, abs=1e-6)
    with pytest.raises(ConfigError):
        LS.kernel_L1(zero)
    lam = 64.0
    const = LS.constant_kernel_spec(lam, u=lam)
    est = LS.kernel_L1(const, {"mode": "grid", "step": 1 / 32}).estimate
    assert est == pytest.approx(6 * bracket(lam) ** -10, rel=1e-9)
    mc = LS.kernel_L1(const, {"mode": "mc", "count": 20000, "seed": 1})
    assert mc.estimate == pytest.approx(6 * bracket(lam) ** -10, rel=1e-9)


def test_kernel_grid_against_mc():
    spec = LS.random_sign_spec(64.0, seed=3)
    grid = LS.kernel_L1(spec, {"mode": "grid", "step": 1 / 128})
    mc = LS.kernel_L1(spec, {"mode": "mc", "count": 2 * 10 ** 6, "seed": 7})
    assert abs(grid.estimate - mc.estimate) <= mc.error_bar + grid.error_bar
    again = LS.kernel_L1(spec, {"mode": "mc", "count": 2 * 10 ** 6, "seed": 7, "chunk": 10 ** 6})
    assert again.estimate == mc.estimate


def test_kernel_t_integral_against_quad():
    # one (x, y) line: grid mode with a single sample reproduces a direct t quadrature
    lam = 64.0
    spec = LS.random_sign_spec(lam, seed=9)
    x = y = 0.0
    ci, cj = [int(np.floor((c - o) / spec.h)) for c, o in ((x, LS.BOX_X[0]), (y, LS.BOX_Y[0]))]
    u, v = spec.u[ci, cj], spec.v[ci, cj]

    def integrand(t):
        i = int(np.floor((x + t - LS.BOX_X[0]) / spec.h))
        j = int(np.floor((y + t * t - LS.BOX_Y[0]) / spec.h))
        return (1 + (spec.w[i, j] * t * t + v * t + u) ** 2) ** -5

    edges = sorted({t for t in np.arange(0.5, 2.0, spec.h) if 0.5 < t < 2}
                   | {np.sqrt(s) for s in np.arange(0.25, 4.0, spec.h) if 0.25 < s < 4})
    ref = quad(integrand, 0.5, 2.0, points=edges[:100], limit=2000, epsabs=1e-16)[0]
    got = LS._t_integral(x, y, u, v, spec.w, LS.BOX_X[0], LS.BOX_Y[0], spec.h, 10.0, LS.GL8_X, LS.GL8_W)
    assert got == pytest.approx(ref, rel=1e-6, abs=1e-15)


def test_kernel_decay_small_sweep():
    from lgc_lab.modelform import fit_decay
    lams = [2.0 ** 6, 2.0 ** 8, 2.0 ** 10]
    ests = [LS.kernel_L1(LS.random_sign_spec(lam, seed=0), {"mode": "grid", "step": 1 / 128}).estimate for lam in lams]
    assert fit_decay(lams, ests).sigma_hat > 0
