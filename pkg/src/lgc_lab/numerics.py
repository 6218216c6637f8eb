"""Scalar building blocks: brackets, bump profiles, dyadic windows, symmetry operators."""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from . import DomainError

TABLE_STEP = 2.0 ** -14


def e(z):
    """Unit-circle character exp(2 pi i z)."""
    return np.exp(2j * np.pi * np.asarray(z))


def jap_bracket(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("jap_bracket needs finite input")
    out = np.hypot(1.0, x)
    return float(out) if out.ndim == 0 else out


def _m(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity transition: 0 for t <= 0, 1 for t >= 1."""
    a = _m(t)
    b = _m(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def _plateau_exact(x):
    return smooth_step(2.0 - np.abs(np.asarray(x, dtype=float)))


def _rho_exact(t):
    t = np.asarray(t, dtype=float)
    return smooth_step(2.0 * t - 1.0) * smooth_step(4.0 - 2.0 * t)


@lru_cache(maxsize=None)
def _tables():
    # plateau only varies on 1 <= |x| <= 2, rho on (1/2, 2)
    xs = np.arange(1.0, 2.0 + TABLE_STEP / 2, TABLE_STEP)
    plateau_spline = CubicSpline(xs, _plateau_exact(xs), bc_type="clamped")
    ts = np.arange(0.5, 2.0 + TABLE_STEP / 2, TABLE_STEP)
    rho_spline = CubicSpline(ts, _rho_exact(ts), bc_type="clamped")
    return plateau_spline, rho_spline


def plateau(x, exact=False):
    """Even bump: 1 on [-1,1], 0 off (-2,2)."""
    x = np.abs(np.asarray(x, dtype=float))
    if exact:
        return _plateau_exact(x)
    spline = _tables()[0]
    out = np.zeros_like(x)
    out[x <= 1.0] = 1.0
    mid = (x > 1.0) & (x < 2.0)
    out[mid] = np.clip(spline(x[mid]), 0.0, 1.0)
    return out


def ring(x, exact=False):
    x = np.asarray(x, dtype=float)
    return plateau(x, exact) - plateau(2.0 * x, exact)


def unity(z):
    """Profile whose integer-shifted squares sum to one; supported in [-1,1]."""
    z = np.asarray(z, dtype=float)
    return np.sqrt(smooth_step(z + 1.0) * smooth_step(1.0 - z))


def rho(t, exact=False):
    """Nonnegative profile supported in (1/2, 2)."""
    t = np.asarray(t, dtype=float)
    if exact:
        return _rho_exact(t)
    spline = _tables()[1]
    out = np.zeros_like(t)
    mid = (t > 0.5) & (t < 2.0)
    out[mid] = np.clip(spline(t[mid]), 0.0, 1.0)
    return out


@dataclass(frozen=True)
class BumpLibrary:
    exact: bool = False

    def plateau(self, x):
        return plateau(x, self.exact)

    def ring(self, x):
        return ring(x, self.exact)

    def unity(self, z):
        return unity(z)

    def rho(self, t):
        return rho(t, self.exact)


def lp_window(k, j, xi, exact=False):
    xi = np.asarray(xi, dtype=float)
    if j == 0:
        return plateau(xi / 2.0 ** k, exact)
    # difference of plateau evaluations keeps telescoping sums exact
    return plateau(xi / 2.0 ** (k + j), exact) - plateau(xi / 2.0 ** (k + j - 1), exact)


def symmetry_apply(kind, g, z, param):
    """Apply Tr / Dil^p / Mod to a callable profile g, sampled at z.

    kind='translate': param = x0;  kind='dilate': param = (lam, p);
    kind='modulate': param = xi.
    """
    z = np.asarray(z, dtype=float)
    if kind == "translate":
        return g(z - param)
    if kind == "dilate":
        lam, p = param
        if not lam > 0:
            raise DomainError("dilation needs lambda > 0")
        if p not in (1, 2, np.inf, "inf"):
            raise DomainError("dilation exponent must be 1, 2 or inf")
        scale = 1.0 if p in (np.inf, "inf") else lam ** (-1.0 / p)
        return scale * g(z / lam)
    if kind == "modulate":
        return e(param * z) * g(z)
    raise DomainError(f"unknown symmetry {kind!r}")


@dataclass
class ExponentLedger:
    delta: Fraction
    epsilon: Fraction
    N_weight: int = 10
    sigma_target: float | None = None
    d_values: tuple = (5, 39)

    @staticmethod
    def delta_of_d(d):
        return Fraction(1, 2 * d + 2)

    def as_floats(self):
        return {"delta": float(self.delta), "epsilon": float(self.epsilon),
                "N_weight": self.N_weight, "sigma_target": self.sigma_target}


def exponent_ledger(N_weight=10):
    d5 = ExponentLedger.delta_of_d(5)
    d39 = ExponentLedger.delta_of_d(39)
    delta = d5 * d39 / (8 * d5 + 8 * d39)
    return ExponentLedger(delta=delta, epsilon=delta / 152, N_weight=N_weight)


def gauss_legendre(n):
    """Nodes/weights on [-1,1]."""
    return np.polynomial.legendre.leggauss(n)
