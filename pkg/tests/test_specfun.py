"""Bessel closed forms against an exact-rational series, kernel quadrature checks."""

import math
from fractions import Fraction

import numpy as np
import pytest

from petersson2.forms import HalfIntegralForm
from petersson2.specfun import (
    EigenPair,
    EnvelopeConstants,
    bessel_bounds,
    bessel_envelope,
    bessel_half,
    eigen_pair,
    kernel_bound,
    kernel_bound_sharp,
    kernel_integral,
)


def series_reference(k, x, terms=80):
    """J_{k-3/2}(x) with the alternating sum done in exact rationals.

    Factor out (x/2)^nu / Gamma(nu+1); the remaining series has rational
    terms for rational x, so the cancellation costs no precision.
    """
    nu = k - Fraction(3, 2)
    xr = Fraction(x).limit_denominator(10**12)
    q = xr * xr / 4
    term = Fraction(1)
    acc = Fraction(1)
    for m in range(1, terms):
        term = -term * q / (m * (m + nu))
        acc += term
    lead = float(xr / 2) ** float(nu) / math.gamma(float(nu) + 1.0)
    return lead * float(acc)


def test_frozen_low_orders():
    assert bessel_half(2, math.pi / 2) == pytest.approx(2 / math.pi, abs=1e-14)
    assert bessel_half(3, math.pi) == pytest.approx(math.sqrt(2) / math.pi, abs=1e-14)


def test_small_x_leading_term():
    for k in (3, 4, 7):
        nu = k - 1.5
        x = 1e-4
        lead = (x / 2) ** nu / math.gamma(nu + 1)
        assert bessel_half(k, x) == pytest.approx(lead, rel=1e-7)


def test_series_agreement():
    for k in range(3, 13):
        for x in (0.25, 1.0, 3.5, 7.0, 12.0, 20.0):
            want = series_reference(k, x)
            got = bessel_half(k, x)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-15), (k, x)


def test_scipy_cross_check():
    special = pytest.importorskip("scipy.special")
    rng = np.random.default_rng(7)
    for _ in range(60):
        k = int(rng.integers(2, 13))
        x = float(rng.uniform(0.01, 80.0))
        assert bessel_half(k, x) == pytest.approx(
            float(special.jv(k - 1.5, x)), rel=1e-9, abs=1e-13
        )


def test_recurrence_consistency():
    # stable regime only: x above the largest order involved
    for x in (12.0, 25.0, 60.0):
        for k in range(3, 11):
            if x <= k + 0.5:
                continue
            nu = k - 1.5
            lhs = bessel_half(k + 1, x)
            rhs = (2 * nu / x) * bessel_half(k, x) - bessel_half(k - 1, x)
            assert lhs == pytest.approx(rhs, abs=1e-10)


def test_bessel_bounds_frozen():
    assert bessel_bounds(3, 1.0) == (1.0, 1.0)
    assert bessel_bounds(4, 4.0) == (32.0, 0.5)


def test_envelope_log_grid():
    # k=3 passes with constant 1.0; the default constant covers k <= 16
    lo, hi = bessel_bounds(3, 2.743)
    assert abs(bessel_half(3, 2.743)) <= 1.0 * min(lo, hi)
    for x in np.geomspace(1e-3, 1e3, 400):
        lo, hi = bessel_bounds(3, float(x))
        assert abs(bessel_half(3, float(x))) <= 1.0 * min(lo, hi), x
    for k in (4, 6, 10, 12, 16):
        for x in np.geomspace(1e-3, 1e3, 400):
            assert abs(bessel_half(k, float(x))) <= bessel_envelope(k, float(x)) * (
                1 + 1e-12
            ), (k, x)


def test_bessel_domain_errors():
    with pytest.raises(ValueError):
        bessel_half(1, 1.0)
    with pytest.raises(ValueError):
        bessel_half(4, 0.0)


def test_eigen_pair_frozen():
    Q = HalfIntegralForm(1, 0, 1)
    pair = eigen_pair(Q, Q, np.eye(2, dtype=int))
    assert (pair.s1, pair.s2) == (1.0, 1.0)
    pair = eigen_pair(Q, Q, np.diag([1, 2]))
    assert pair.s1 == pytest.approx(1.0, abs=1e-14)
    assert pair.s2 == pytest.approx(0.5, abs=1e-14)
    assert pair.detP == pytest.approx(0.25, abs=1e-15)
    assert pair.traceP == pytest.approx(1.25, abs=1e-15)


def test_eigen_pair_det_consistency():
    rng = np.random.default_rng(11)
    for _ in range(40):
        a = int(rng.integers(1, 5))
        c = int(rng.integers(1, 5))
        b = int(rng.integers(-a, a + 1))
        Q = HalfIntegralForm(a, b, a * c + abs(b))
        T = HalfIntegralForm(c, -b, a + c)
        if Q.det <= 0 or T.det <= 0:
            continue
        NC = np.array(
            [[rng.integers(-3, 4), rng.integers(-3, 4)], [rng.integers(-3, 4), rng.integers(-3, 4)]],
            dtype=int,
        )
        if NC[0, 0] * NC[1, 1] - NC[0, 1] * NC[1, 0] == 0:
            continue
        pair = eigen_pair(Q, T, NC)
        det_nc = float(NC[0, 0] * NC[1, 1] - NC[0, 1] * NC[1, 0])
        want = float(T.det * Q.det) / det_nc**2
        assert pair.s1**2 * pair.s2**2 == pytest.approx(want, rel=1e-12)
        assert pair.s1 >= pair.s2 > 0


def test_eigen_pair_rejects_indefinite():
    Q = HalfIntegralForm(1, 0, 1)
    with pytest.raises(ValueError):
        eigen_pair(Q, HalfIntegralForm(1, 0, -1), np.eye(2, dtype=int))
    with pytest.raises(ValueError):
        eigen_pair(Q, Q, np.array([[1, 1], [1, 1]]))


def test_kernel_integral_reference():
    # 10x panel density oracle with the same rule
    got = kernel_integral(4, 1.0, 1.0)
    xg, wg = np.polynomial.legendre.leggauss(20)
    panels = 640
    edges = np.linspace(0.0, math.pi / 2.0, panels + 1)
    mid = (edges[:-1, None] + edges[1:, None]) / 2.0
    half = (edges[1:, None] - edges[:-1, None]) / 2.0
    theta = (mid + half * xg[None, :]).ravel()
    weight = (half * wg[None, :]).ravel()
    su = np.sin(theta)
    vals = np.array(
        [bessel_half(4, 4 * math.pi * s) ** 2 * s for s in su]
    )
    want = float(np.dot(weight, vals))
    assert got == pytest.approx(want, abs=1e-12)


def test_kernel_integral_scipy():
    special = pytest.importorskip("scipy.special")
    integrate = pytest.importorskip("scipy.integrate")
    for k, s1, s2 in ((4, 1.0, 0.5), (6, 2.0, 1.0), (4, 0.3, 0.3)):
        want, err = integrate.quad(
            lambda u: special.jv(k - 1.5, 4 * math.pi * s1 * u)
            * special.jv(k - 1.5, 4 * math.pi * s2 * u)
            * u
            / math.sqrt(1 - u * u),
            0,
            1,
            epsabs=1e-13,
            limit=400,
        )
        assert kernel_integral(k, s1, s2) == pytest.approx(want, abs=1e-10 + 10 * err)


def test_kernel_integral_symmetry_and_limits():
    assert kernel_integral(4, 1.7, 0.4) == pytest.approx(
        kernel_integral(4, 0.4, 1.7), abs=1e-12
    )
    assert abs(kernel_integral(5, 1e-6, 1e-6)) < 1e-12
    with pytest.raises(ValueError):
        kernel_integral(4, 0.0, 1.0)


def test_kernel_bound_frozen_and_monotone():
    pair = EigenPair(1.0, 1.0, 1.0, 2.0)
    assert kernel_bound(4, pair) == pytest.approx(2.0**-1.5, abs=1e-15)
    tiny = EigenPair(1e-2, 1e-2, 1e-8, 2e-4)
    assert kernel_bound(4, tiny) == pytest.approx((1e-8) ** 1.25, rel=1e-12)
    prev = math.inf
    for tp in (2.0, 3.0, 5.0, 9.0):
        cur = kernel_bound(4, EigenPair(1.0, 1.0, 1.0, tp))
        assert cur <= prev
        prev = cur


def test_kernel_bound_sharp_dominates_integral():
    for s1 in (0.05, 0.3, 0.8, 1.5, 3.0, 8.0):
        for s2 in (0.05, 0.3, 0.8, 1.5):
            pair = EigenPair(
                max(s1, s2),
                min(s1, s2),
                (s1 * s2) ** 2,
                s1 * s1 + s2 * s2,
            )
            for k in (4, 6, 10):
                assert abs(kernel_integral(k, s1, s2)) <= kernel_bound_sharp(
                    k, pair
                ) * (1 + 1e-9), (k, s1, s2)


def test_envelope_constants_defaults():
    c = EnvelopeConstants()
    assert c.bessel >= 1.097 and c.kernel == 1.0
