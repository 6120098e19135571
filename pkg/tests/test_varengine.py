import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from bandclt.combinatorics import limit_bilinear_poly, moment_coeff
from bandclt.errors import AccuracyError, InvalidSpecError, KernelSingularityError
from bandclt.testfunctions import named, polynomial
from bandclt.varengine import (
    ChebBasis,
    a_limit,
    cheb_coeffs,
    cheb_u,
    f_kernel_integral,
    f_kernel_series,
    kappa4_integral,
    limit_bilinear,
    semicircle_cdf,
    semicircle_density,
    semicircle_self_convolution,
    semicircle_self_convolution_closed,
    semicircle_transform,
    support_radius,
    var_band,
    var_gauss,
)

R1 = 2 * math.sqrt(2)


def arcsine_moment(q):
    """int lam**q / sqrt(8 - lam**2) dlam over the support (sigma = 1), divided by pi."""
    if q % 2:
        return Fraction(0)
    # (R/2)**q = 2**(q/2) for R = 2 sqrt(2)
    return math.comb(q, q // 2) * Fraction(2) ** (q // 2)


def var_gauss_oracle(coeffs):
    """Exact kernel term for a polynomial at sigma = 1 from the C_{l,m} table.

    Var = (2/pi) int <D_lam, phi'> dlam / sqrt(8 - lam^2) with
    D_lam(x) = sum_i a_i sum_{p+q=i-1} x^p lam^q and <x^p, x^r> = 2^((p+r)/2) C_{p,r}.
    """
    total = Fraction(0)
    for i, a in enumerate(coeffs):
        for p in range(i):
            q = i - 1 - p
            mom = arcsine_moment(q)
            if mom == 0:
                continue
            for j, c in enumerate(coeffs):
                if j == 0 or (p + j - 1) % 2:
                    continue
                form = Fraction(2) ** ((p + j - 1) // 2) * moment_coeff(p, j - 1).value
                total += Fraction(a) * j * Fraction(c) * form * mom
    return 2 * total


def kappa4_oracle(coeffs):
    """int phi(lam) (4 - lam^2) / sqrt(8 - lam^2) dlam / pi at sigma = 1."""
    return sum(Fraction(a) * (4 * arcsine_moment(i) - arcsine_moment(i + 2)) for i, a in enumerate(coeffs))


def test_oracle_anchor_values():
    assert var_gauss_oracle([0, 1]) == 2
    assert var_gauss_oracle([0, 0, 1]) == 8
    assert kappa4_oracle([0, 0, 1]) == -8


@pytest.mark.parametrize("coeffs", [[0, 1], [0, 0, 1], [0, 0, 0, 1], [0, 0, 0, 0, 1], [1, -2, 0.5, 0.25],
                                    [0, 1, 1, 1, 1, 1]])
def test_var_gauss_matches_exact_oracle(coeffs):
    rep = var_gauss(polynomial(coeffs), 1.0)
    expected = float(var_gauss_oracle(coeffs))
    assert rep.total == pytest.approx(expected, rel=1e-11)
    assert rep.kappa4_term == 0.0


@pytest.mark.parametrize("coeffs", [[0, 0, 1], [0, 1, 0, 1], [2, 0, 0, 0, 1]])
@pytest.mark.parametrize("kappa4", [-2.0, -1.2, 0.7])
def test_kappa4_term_matches_oracle(coeffs, kappa4):
    rep = var_band(polynomial(coeffs), 1.0, kappa4)
    integral = float(kappa4_oracle(coeffs)) * math.pi
    assert kappa4_integral(polynomial(coeffs), 1.0) == pytest.approx(integral, rel=1e-12, abs=1e-12)
    assert rep.kappa4_term == pytest.approx(kappa4 / (16 * math.pi**2) * integral**2, rel=1e-11, abs=1e-12)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 1.7])
def test_variance_scaling_with_sigma(sigma):
    assert var_gauss(polynomial([0, 1]), sigma).total == pytest.approx(2 * sigma**2, rel=1e-12)
    assert var_gauss(polynomial([0, 0, 1]), sigma).total == pytest.approx(8 * sigma**4, rel=1e-12)
    assert var_band(polynomial([0, 0, 1]), sigma, -1.2 * sigma**4).total == pytest.approx(3.2 * sigma**4, rel=1e-12)


def test_variance_invariant_under_constant_shift():
    a = var_band(named("tanh"), 1.0, -1.0).total
    b = var_band(named("tanh").shifted(5.0), 1.0, -1.0).total
    assert a == pytest.approx(b, rel=1e-12)


@pytest.mark.parametrize("name", ["tanh", "gauss", "cos", "lorentz"])
def test_smooth_variance_converges(name):
    coarse = var_gauss(named(name), 1.0, nodes=120)
    fine = var_gauss(named(name), 1.0, nodes=400)
    assert fine.total == pytest.approx(coarse.total, rel=1e-9)
    assert fine.total > 0
    assert fine.error_estimate < 1e-8


def test_var_report_tolerance_and_dict():
    rep = var_band(polynomial([0, 0, 1]), 1.0, -1.2)
    d = rep.to_dict()
    assert set(d) == {"kernel_term", "kappa4_term", "total", "method", "error_estimate"}
    with pytest.raises(AccuracyError):
        var_gauss(named("tanh"), 1.0, nodes=8, tol=1e-14)


def test_variance_rejects_bad_sigma():
    with pytest.raises(InvalidSpecError):
        var_gauss(polynomial([0, 1]), 0.0)


# -- basis and transforms -------------------------------------------------------


@pytest.mark.parametrize("k,expected", [(0, 1.0), (1, 2.0), (2, 3.0), (5, 6.0)])
def test_cheb_u_at_right_endpoint(k, expected):
    assert cheb_u(k, R1, 1.0) == pytest.approx(expected)


def test_cheb_u_trig_form():
    theta = np.linspace(0.1, 3.0, 17)
    x = R1 * np.cos(theta)
    for k in range(8):
        np.testing.assert_allclose(cheb_u(k, x, 1.0), np.sin((k + 1) * theta) / np.sin(theta), atol=1e-12)


def test_gram_matrix_is_identity():
    assert np.abs(ChebBasis(1.3, 12).gram() - np.eye(13)).max() < 1e-13


def test_cheb_coeffs_polynomial_truncates():
    c = cheb_coeffs(lambda x: 1 + x**3, 1.0, 12)
    assert np.abs(c[4:]).max() < 1e-10
    assert c[0] == pytest.approx(1.0)


def test_cheb_coeffs_rejects_negative_order():
    with pytest.raises(InvalidSpecError):
        cheb_coeffs(np.cos, 1.0, -1)


@pytest.mark.parametrize("a", [0.3, 2.0, 11.0])
def test_cheb_coeffs_of_exponential_bessel_oracle(a):
    # e^{i a cos(theta)} has U-coefficients 2 (k+1) i^k J_{k+1}(a) / a
    sigma = 1.0
    c = cheb_coeffs(lambda x: np.exp(1j * a * x / R1), sigma, 30)
    k = np.arange(31)
    oracle = 2 * (k + 1) * (1j**k) * special.jv(k + 1, a) / a
    np.testing.assert_allclose(c, oracle, atol=1e-13)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_semicircle_transform_bessel(sigma):
    r = support_radius(sigma)
    t = np.array([0.0, 0.1, 1.0, 3.0, 10.0])
    rt = np.where(t == 0, 1.0, r * t)
    expected = np.where(t == 0, 1.0, 2 * special.j1(rt) / rt)
    v = semicircle_transform(t, sigma)
    np.testing.assert_allclose(v.real, expected, atol=1e-14)
    assert np.abs(v.imag).max() < 1e-14


def test_semicircle_density_and_cdf():
    total, _ = integrate.quad(semicircle_density, -R1, R1, args=(1.0,))
    assert total == pytest.approx(1.0, abs=1e-10)
    assert semicircle_cdf(0.0, 1.0) == pytest.approx(0.5)
    assert semicircle_cdf(-10.0, 1.0) == 0.0 and semicircle_cdf(10.0, 1.0) == 1.0
    x = 0.7
    num, _ = integrate.quad(semicircle_density, -R1, x, args=(1.0,))
    assert semicircle_cdf(x, 1.0) == pytest.approx(num, abs=1e-10)


@pytest.mark.parametrize("t", [0.01, 0.5, 1.3, 4.0])
def test_self_convolution_two_routes(t):
    a = semicircle_self_convolution(t, 1.0)
    b = semicircle_self_convolution_closed(t, 1.0)
    assert abs(a - b) < 1e-12
    assert abs(b.imag) < 1e-14


def test_self_convolution_small_t():
    assert semicircle_self_convolution_closed(1e-3, 1.0).real == pytest.approx(1e-3, rel=1e-5)


# -- kernel ----------------------------------------------------------------------


POINTS = [(0.3, -1.1), (2.0, 1.5), (-2.5, 2.6), (0.01, 0.2), (1.0, 1.05), (-2.7, -2.75)]


@pytest.mark.parametrize("x,y", POINTS)
def test_kernel_series_vs_integral(x, y):
    s = f_kernel_series(x, y, 1.0, K=4000)
    i = f_kernel_integral(x, y, 1.0)
    assert s.value == pytest.approx(i.value, rel=1e-4)
    assert i.error < 1e-6


@pytest.mark.parametrize("x,y", POINTS[:3])
def test_kernel_symmetry(x, y):
    assert f_kernel_integral(x, y, 1.0).value == pytest.approx(f_kernel_integral(y, x, 1.0).value, rel=1e-12)
    assert f_kernel_series(x, y, 1.0).value == pytest.approx(f_kernel_series(y, x, 1.0).value, rel=1e-12)


def test_kernel_cesaro_is_close_but_biased():
    smooth = f_kernel_series(0.3, -1.1, 1.0, K=2000)
    ces = f_kernel_series(0.3, -1.1, 1.0, K=2000, summation="cesaro")
    assert ces.value == pytest.approx(smooth.value, rel=1e-2)
    assert smooth.error < ces.error


def test_kernel_errors():
    with pytest.raises(KernelSingularityError):
        f_kernel_series(0.5, 0.5 + 1e-5, 1.0)
    with pytest.raises(KernelSingularityError):
        f_kernel_integral(0.5, 0.5, 1.0)
    with pytest.raises(InvalidSpecError):
        f_kernel_series(3.0, 0.0, 1.0)
    with pytest.raises(InvalidSpecError):
        f_kernel_series(0.3, 0.0, 1.0, summation="abel")
    with pytest.raises(AccuracyError):
        f_kernel_integral(0.3, -1.1, 1.0, half_periods=20, tol=1e-14)


# -- bilinear form and A(t) ----------------------------------------------------------


@given(st.lists(st.integers(-3, 3), min_size=1, max_size=6), st.lists(st.integers(-3, 3), min_size=1, max_size=6),
       st.sampled_from([0.5, 1.0, 1.5]))
@settings(max_examples=40, deadline=None)
def test_limit_bilinear_matches_exact(p, q, sigma):
    got = limit_bilinear(np.polynomial.Polynomial(p), np.polynomial.Polynomial(q), sigma, nodes=64)
    exact = limit_bilinear_poly(p, q, sigma)
    assert got.real == pytest.approx(exact, rel=1e-11, abs=1e-11)


def test_a_limit_zero_and_linear_reduction():
    assert a_limit(0.0, polynomial([0, 1]), 1.0) == 0
    for t in (0.5, 1.0, 2.0, 5.0):
        ref, _ = integrate.quad(lambda s: 2 * special.j1(R1 * s) / (R1 * s) if s else 1.0, 0, t, epsabs=1e-13)
        assert a_limit(t, polynomial([0, 1]), 1.0) == pytest.approx(-2 * ref, abs=1e-10)


def test_a_limit_small_t_slope():
    # A(t) ~ -2 sigma^2 t <1, phi'> for small t
    phi = named("tanh")
    slope = limit_bilinear(lambda x: np.ones_like(x), phi.derivative, 1.0).real
    assert a_limit(1e-4, phi, 1.0).real == pytest.approx(-2e-4 * slope, rel=1e-4)
