"""Limit objects of the band CLT: Chebyshev basis, kernel, A(t), variances.

The rescaled Chebyshev polynomials ``U_k`` live on ``[-R, R]`` with
``R = 2 sqrt(2) sigma`` and are orthonormal for the semicircle density.  The
limiting bilinear form is diagonal in that basis,
``<f, g> = sum_k f_k g_k gamma_k``, and the two-point kernel is

    F(x, y) = pi / (2 sigma**2) * sum_k U_k(x) U_k(y) gamma_k,   x != y.

Both variance formulas integrate the divided difference of ``phi`` against
``phi'`` through this kernel.  Substituting the series for ``F`` separates the
``x`` and ``y`` integrals, so the triple integral collapses to
``(2 sigma**2 / pi) int <D_lam, phi'> dlam / sqrt(R**2 - lam**2)`` where
``D_lam(x) = (phi(x) - phi(lam)) / (x - lam)``; every remaining integral has
a Gauss rule matched to its endpoint weight.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.fft import dst

from .combinatorics import gamma_table
from .errors import AccuracyError, InvalidSpecError, KernelSingularityError
from .testfunctions import TestFunction

__all__ = [
    "support_radius",
    "semicircle_density",
    "semicircle_cdf",
    "semicircle_nodes",
    "arcsine_nodes",
    "ChebBasis",
    "cheb_u",
    "cheb_coeffs",
    "semicircle_transform",
    "semicircle_self_convolution",
    "semicircle_self_convolution_closed",
    "KernelValue",
    "f_kernel_series",
    "f_kernel_integral",
    "limit_bilinear",
    "a_limit",
    "VarianceReport",
    "kappa4_integral",
    "var_gauss",
    "var_band",
]

DIVDIFF_THRESHOLD = 1e-4


def _check_sigma(sigma):
    if not (sigma > 0 and math.isfinite(sigma)):
        raise InvalidSpecError(f"sigma must be positive and finite, got {sigma}", field="sigma")


def support_radius(sigma):
    return 2.0 * math.sqrt(2.0) * sigma


def semicircle_density(x, sigma):
    """``sqrt(8 sigma**2 - x**2) / (4 pi sigma**2)`` on the support, 0 outside."""
    x = np.asarray(x, dtype=float)
    inside = np.clip(8.0 * sigma**2 - x**2, 0.0, None)
    out = np.sqrt(inside) / (4.0 * np.pi * sigma**2)
    return out if out.ndim else float(out)


def semicircle_cdf(x, sigma):
    r = support_radius(sigma)
    u = np.clip(np.asarray(x, dtype=float) / r, -1.0, 1.0)
    out = 0.5 + (u * np.sqrt(1.0 - u**2) + np.arcsin(u)) / np.pi
    return out if out.ndim else float(out)


@lru_cache(maxsize=32)
def _semicircle_rule(n):
    theta = np.arange(1, n + 1) * np.pi / (n + 1)
    w = 2.0 / (n + 1) * np.sin(theta) ** 2
    for a in (theta, w):
        a.flags.writeable = False
    return theta, w


def semicircle_nodes(sigma, n):
    """Gauss rule for the semicircle density: ``int f rho ~ sum w_i f(x_i)``.

    Exact for polynomials of degree ``<= 2n - 1``.  Returns ``(x, w, theta)``
    with ``x = R cos(theta)``.
    """
    theta, w = _semicircle_rule(int(n))
    return support_radius(sigma) * np.cos(theta), w, theta


def arcsine_nodes(sigma, n):
    """Gauss-Chebyshev rule: ``int g(lam) / sqrt(R**2 - lam**2) dlam ~ sum w_j g(lam_j)``."""
    theta = (np.arange(n) + 0.5) * np.pi / n
    return support_radius(sigma) * np.cos(theta), np.full(n, np.pi / n)


def cheb_u(k: int, x, sigma: float):
    """Rescaled Chebyshev ``U_k`` by the three-term recurrence (valid for all real x)."""
    if k < 0:
        raise InvalidSpecError("order must be >= 0")
    x = np.asarray(x, dtype=float)
    u = x / (math.sqrt(2.0) * sigma)
    prev, cur = np.ones_like(u), u
    if k == 0:
        out = prev
    else:
        for _ in range(k - 1):
            prev, cur = cur, u * cur - prev
        out = cur
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ChebBasis:
    """Rescaled Chebyshev-U basis up to ``max_order`` on ``[-2 sqrt(2) sigma, 2 sqrt(2) sigma]``."""

    sigma: float
    max_order: int

    def __post_init__(self):
        _check_sigma(self.sigma)
        if self.max_order < 0:
            raise InvalidSpecError("max_order must be >= 0")

    @property
    def endpoints(self):
        r = support_radius(self.sigma)
        return -r, r

    def evaluate(self, x):
        """Matrix ``U[k, i] = U_k(x_i)`` for ``k = 0..max_order``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = x / (math.sqrt(2.0) * self.sigma)
        out = np.empty((self.max_order + 1, x.size))
        out[0] = 1.0
        if self.max_order >= 1:
            out[1] = u
        for k in range(2, self.max_order + 1):
            out[k] = u * out[k - 1] - out[k - 2]
        return out

    def coefficients(self, f, nodes=None):
        return cheb_coeffs(f, self.sigma, self.max_order, nodes)

    def gram(self, nodes=None):
        """Semicircle Gram matrix of the basis; the identity up to rounding."""
        n = nodes or 2 * self.max_order + 2
        x, w, _ = semicircle_nodes(self.sigma, n)
        u = self.evaluate(x)
        return (u * w) @ u.T


def _dst_coefficients(values, theta, kmax):
    # f_k = 2/(N+1) sum_i f(x_i) sin(theta_i) sin((k+1) theta_i) is DST-I / (N+1)
    n = theta.size
    y = values * np.sin(theta)
    if np.iscomplexobj(y):
        out = dst(y.real, type=1, axis=-1) + 1j * dst(y.imag, type=1, axis=-1)
    else:
        out = dst(y, type=1, axis=-1)
    return out[..., : kmax + 1] / (n + 1)


def cheb_coeffs(f, sigma: float, K: int, nodes: int | None = None) -> np.ndarray:
    """Coefficients ``f_k = int f U_k rho_sc``, ``k = 0..K``.

    Uses the semicircle Gauss rule with ``nodes >= 4 K`` points (default
    ``max(4K + 4, 64)``).  ``f`` may return complex values.
    """
    _check_sigma(sigma)
    if K < 0:
        raise InvalidSpecError(f"K must be >= 0, got {K}", field="K")
    n = max(nodes or 0, 4 * K + 4, 64)
    x, _, theta = semicircle_nodes(sigma, n)
    vals = np.asarray(f(x))
    if vals.shape == ():
        vals = np.full(x.shape, vals, dtype=vals.dtype)
    return _dst_coefficients(vals, theta, K)


def semicircle_transform(t, sigma: float, nodes: int | None = None):
    """``v(t) = int exp(i t y) rho_sc(y) dy``; vectorized over ``t``."""
    _check_sigma(sigma)
    t_arr = np.asarray(t, dtype=float)
    r = support_radius(sigma)
    n = nodes or int(64 + r * np.max(np.abs(t_arr), initial=0.0))
    x, w, _ = semicircle_nodes(sigma, n)
    out = np.exp(1j * np.multiply.outer(t_arr, x)) @ w
    return out if out.ndim else complex(out)


def semicircle_self_convolution(t, sigma: float, nodes: int = 96):
    """``(v * v)(t) = int_0^t v(s) v(t - s) ds`` by Gauss-Legendre in ``s``."""
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * t * (gx + 1.0)
    return complex(0.5 * t * np.sum(gw * semicircle_transform(s, sigma) * semicircle_transform(t - s, sigma)))


def semicircle_self_convolution_closed(t, sigma: float):
    """``-(i / (8 pi sigma**4)) int exp(i t mu) mu sqrt(8 sigma**2 - mu**2) dmu``."""
    _check_sigma(sigma)
    r = support_radius(sigma)
    x, w, _ = semicircle_nodes(sigma, int(64 + r * abs(t)))
    # mu sqrt(...) dmu = 4 pi sigma**2 mu rho(mu) dmu
    return complex(-1j / (2.0 * sigma**2) * np.sum(w * x * np.exp(1j * t * x)))


# -- kernel ----------------------------------------------------------------


class KernelValue(NamedTuple):
    value: float
    error: float


@lru_cache(maxsize=16)
def plateau_window(K: int) -> np.ndarray:
    """Smooth cutoff: 1 on ``k <= K/2``, C-infinity decay to 0 at ``k = K + 1``."""
    t = np.arange(K + 1) / (K + 1)
    u = np.clip(2.0 * t - 1.0, 0.0, 1.0)

    def bump(v):
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    w = bump(1.0 - u) / (bump(1.0 - u) + bump(u))
    w.flags.writeable = False
    return w


def _series_weights(K, summation):
    if summation == "smooth":
        return plateau_window(K)
    if summation == "cesaro":
        return 1.0 - np.arange(K + 1) / (K + 1)
    raise InvalidSpecError(f"unknown summation {summation!r}", field="summation")


def _kernel_points(x, y, sigma, exclusion):
    _check_sigma(sigma)
    r = support_radius(sigma)
    if not (abs(x) < r and abs(y) < r):
        raise InvalidSpecError(f"kernel points must lie strictly inside (-{r:.6g}, {r:.6g})")
    if abs(x - y) < exclusion * sigma:
        raise KernelSingularityError(
            f"|x - y| = {abs(x - y):.3g} is below the diagonal exclusion {exclusion * sigma:.3g}"
        )
    return math.acos(x / r), math.acos(y / r)


def _kernel_sum(th1, th2, sigma, K, summation):
    g = gamma_table(K)
    w = _series_weights(K, summation) * g
    k1 = np.arange(1, K + 2)
    h_minus = np.cos(k1 * (th1 - th2)) @ w
    h_plus = np.cos(k1 * (th1 + th2)) @ w
    # U_k(x) U_k(y) = [cos((k+1)(a-b)) - cos((k+1)(a+b))] / (2 sin a sin b)
    return np.pi / (2.0 * sigma**2) * (h_minus - h_plus) / (2.0 * math.sin(th1) * math.sin(th2))


def f_kernel_series(x: float, y: float, sigma: float, K: int = 2000, summation: str = "smooth",
                    exclusion: float = 1e-3) -> KernelValue:
    """Kernel ``F(x, y)`` from its Chebyshev series.

    The series converges only conditionally (``gamma_k ~ sqrt(6 / (pi k))``).
    ``summation="smooth"`` applies a C-infinity plateau cutoff, whose error
    decays faster than any power of ``K |theta_x - theta_y|``;
    ``summation="cesaro"`` uses first-order Cesaro means, which carry an
    ``O(1/K)`` bias.  The error estimate is the change from order ``K // 2``.
    """
    th1, th2 = _kernel_points(x, y, sigma, exclusion)
    full = _kernel_sum(th1, th2, sigma, K, summation)
    half = _kernel_sum(th1, th2, sigma, max(K // 2, 1), summation)
    err = abs(full - half) + 1e-12 * max(1.0, abs(full))
    return KernelValue(float(full), float(err))


_GL_TAIL = np.polynomial.legendre.leggauss(40)


def _one_minus_sinc(s):
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    small = np.abs(s) < 0.1
    z = s[small] ** 2
    out[small] = z / 6.0 * (1.0 - z / 20.0 * (1.0 - z / 42.0 * (1.0 - z / 72.0)))
    big = ~small
    out[big] = 1.0 - np.sin(s[big]) / s[big]
    return out


def _kernel_integrand_remainder(s, x, y, sigma):
    """Integrand minus its two leading terms ``r / D0 + xy r**2 / D0**2`` (``r = sinc s``)."""
    d0 = 2.0 * sigma**2
    q = _one_minus_sinc(s)
    r = 1.0 - q
    one_minus_r2 = q * (2.0 - q)
    num = r * one_minus_r2
    den = d0 * one_minus_r2**2 + r**2 * (x - y) ** 2 - r * x * y * q**2
    return num / den - r / d0 - x * y * r**2 / d0**2


def f_kernel_integral(x: float, y: float, sigma: float, half_periods: int = 200, tol: float = 1e-7,
                      exclusion: float = 1e-3) -> KernelValue:
    """Kernel ``F(x, y)`` from its sinc-form integral over ``s``.

    The integrand decays like ``sin(s) / (2 sigma**2 s)``; its two leading
    terms in ``r = sin(s)/s`` integrate in closed form (``int_0^inf r ds =
    int_0^inf r**2 ds = pi / 2``) and are removed.  The remainder is summed
    over half periods ``[m pi, (m+1) pi]``; the alternating part is removed by
    Euler averaging of partial sums and the monotone ``O(s**-4)`` tail is
    added from its asymptotic form.
    """
    _kernel_points(x, y, sigma, exclusion)
    d0 = 2.0 * sigma**2

    def rem(s):
        return float(_kernel_integrand_remainder(np.array([s]), x, y, sigma)[0])

    head, head_err = integrate.quad(rem, 0.0, np.pi, limit=400, epsabs=1e-13, epsrel=1e-12)
    gx, gw = _GL_TAIL
    m = np.arange(1, half_periods)[:, None]
    s = np.pi * (m + 0.5 * (gx + 1.0))
    parts = 0.5 * np.pi * np.sum(gw * _kernel_integrand_remainder(s, x, y, sigma), axis=1)
    fine = _tail_limit(parts)
    coarse = _tail_limit(parts[: half_periods // 2])
    # the remaining error decays like half_periods**-3: one Richardson step
    total = head + fine + (fine - coarse) / 7.0
    err = abs(fine - coarse) / 7.0 + head_err
    if err > tol * max(1.0, abs(total)):
        raise AccuracyError(
            f"kernel integral did not converge (estimate {err:.3g})",
            estimate=err,
            diagnostics={"fine": fine, "coarse": coarse, "half_periods": half_periods},
        )
    value = 2.0 * (total + 0.5 * np.pi / d0 + 0.5 * np.pi * x * y / d0**2)
    return KernelValue(float(value), float(2.0 * err))


def _euler_average(partial):
    s = np.asarray(partial, dtype=float)
    while s.size > 1:
        s = 0.5 * (s[:-1] + s[1:])
    return float(s[0])


def _tail_limit(parts, window=16):
    """Sum of half-period integrals ``parts`` (starting at ``m = 1``) to infinity.

    Euler averaging of the last ``window`` partial sums cancels the
    alternating part; the monotone ``s**-4`` part beyond the averaging point
    is added as ``c / (3 M**3)`` with ``c`` taken from the last pair.
    """
    partial = np.cumsum(parts)
    hp = parts.size + 1
    mono = 0.5 * (parts[-1] + parts[-2])
    return _euler_average(partial[-window:]) + mono * (hp - window / 2) / 3.0


# -- bilinear form and A(t) ------------------------------------------------


def limit_bilinear(f, g, sigma: float, nodes: int = 256) -> complex:
    """``<f, g> = sum_k f_k conj(g_k) gamma_k`` from Chebyshev coefficients."""
    K = nodes - 1
    fk = cheb_coeffs(f, sigma, K, nodes)
    gk = cheb_coeffs(g, sigma, K, nodes)
    w = plateau_window(K) * gamma_table(K)
    return complex(np.sum(fk * np.conj(gk) * w))


def a_limit(t: float, phi: TestFunction, sigma: float, nodes: int | None = None,
            epsabs: float = 1e-11) -> complex:
    """``A(t) = -2 sigma**2 int_0^t <exp(i s x), phi'> ds``.

    The inner form uses the coefficient representation; the ``s`` integral
    is adaptive (``scipy.integrate.quad_vec``).
    """
    _check_sigma(sigma)
    if t == 0:
        return 0j
    r = support_radius(sigma)
    n = max(nodes or 0, int(96 + 2 * r * abs(t)))
    K = n - 1
    x, _, theta = semicircle_nodes(sigma, n)
    weights = plateau_window(K) * gamma_table(K) * _dst_coefficients(phi.derivative(x), theta, K)

    def inner(s):
        ek = _dst_coefficients(np.exp(1j * s * x), theta, K)
        val = np.sum(ek * weights)
        return np.array([val.real, val.imag])

    res, _ = integrate.quad_vec(inner, 0.0, float(t), epsabs=epsabs, epsrel=1e-10)
    return complex(-2.0 * sigma**2 * (res[0] + 1j * res[1]))


# -- variances --------------------------------------------------------------


@dataclass
class VarianceReport:
    kernel_term: float
    kappa4_term: float
    total: float
    error_estimate: float
    method: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _divided_difference(phi, x, lam, sigma):
    """``(phi(x) - phi(lam)) / (x - lam)`` on the grid ``lam[:, None] x x[None, :]``."""
    X = x[None, :]
    L = lam[:, None]
    h = X - L
    close = np.abs(h) < DIVDIFF_THRESHOLD * sigma
    safe_h = np.where(close, 1.0, h)
    out = (phi(X) - phi(L)) / safe_h
    if np.any(close):
        mid = 0.5 * (X + L)
        hc = np.where(close, h, 0.0)
        dp = phi.derivative
        corr = dp(mid) + (dp(mid + hc) - 2.0 * dp(mid) + dp(mid - hc)) / 24.0
        out = np.where(close, corr, out)
    return out


def _kernel_term(phi, sigma, nodes):
    K = nodes - 1
    x, _, theta = semicircle_nodes(sigma, nodes)
    lam, lw = arcsine_nodes(sigma, nodes)
    d = _dst_coefficients(_divided_difference(phi, x, lam, sigma), theta, K)
    p = _dst_coefficients(phi.derivative(x), theta, K)
    inner = d @ (p * gamma_table(K) * plateau_window(K))
    return 2.0 * sigma**2 / np.pi * float(lw @ inner)


def kappa4_integral(phi, sigma: float, nodes: int = 200) -> float:
    """``int phi(lam) (4 sigma**2 - lam**2) / sqrt(8 sigma**2 - lam**2) dlam``."""
    lam, lw = arcsine_nodes(sigma, nodes)
    return float(lw @ (phi(lam) * (4.0 * sigma**2 - lam**2)))


def var_gauss(phi: TestFunction, sigma: float, nodes: int = 200, tol: float | None = None) -> VarianceReport:
    """Limiting variance for zero fourth cumulant (kernel term only)."""
    return var_band(phi, sigma, 0.0, nodes, tol)


def var_band(phi: TestFunction, sigma: float, kappa4: float, nodes: int = 200,
             tol: float | None = None) -> VarianceReport:
    """Limiting variance: kernel term plus the fourth-cumulant correction.

    The error estimate compares against a run with half the nodes; pass
    ``tol`` to raise :class:`AccuracyError` when it is exceeded.
    """
    _check_sigma(sigma)
    if nodes < 8:
        raise InvalidSpecError("nodes must be >= 8", field="nodes")
    kern = _kernel_term(phi, sigma, nodes)
    kern_half = _kernel_term(phi, sigma, nodes // 2)
    k4 = 0.0
    k4_half = 0.0
    if kappa4 != 0.0:
        pref = kappa4 / (16.0 * np.pi**2 * sigma**8)
        k4 = pref * kappa4_integral(phi, sigma, nodes) ** 2
        k4_half = pref * kappa4_integral(phi, sigma, nodes // 2) ** 2
    err = abs(kern - kern_half) + abs(k4 - k4_half) + 1e-13 * max(1.0, abs(kern))
    if tol is not None and err > tol:
        raise AccuracyError(f"variance error estimate {err:.3g} exceeds {tol:.3g}", estimate=err)
    method = {
        "series_order": nodes - 1,
        "summation": "smooth-plateau",
        "x_nodes": nodes,
        "lambda_nodes": nodes,
        "divided_difference_threshold": DIVDIFF_THRESHOLD * sigma,
        "x_rule": "gauss-chebyshev-2",
        "lambda_rule": "gauss-chebyshev-1",
    }
    return VarianceReport(kern, k4, kern + k4, err, method)
