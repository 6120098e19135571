"""Exact arithmetic for the limiting band bilinear form.

``gamma_k = P(|T_1 + ... + T_k| <= 1/2)`` for i.i.d. uniforms on
``[-1/2, 1/2]``; ``C_{l,m}`` weights Dyck paths of length ``l + m`` by
``gamma_{s(l)}`` where ``s(l)`` is the path height after ``l`` steps.  All
values are kept as :class:`fractions.Fraction`; the alternating sum for
``gamma_k`` loses every digit in floating point once ``k`` is past ~20.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from itertools import product
from typing import NamedTuple

import numpy as np

from .errors import AccuracyError, InvalidSpecError

__all__ = [
    "GammaValue",
    "MomentCoefficient",
    "catalan",
    "gamma_closed",
    "gamma_quadrature",
    "gamma_table",
    "dyck_count_at",
    "ballot_count",
    "dyck_enumerate",
    "moment_coeff",
    "bilinear_exact",
    "limit_bilinear_poly",
    "chebyshev_u_monomials",
]


class GammaValue(NamedTuple):
    k: int
    value: Fraction


class MomentCoefficient(NamedTuple):
    l: int
    m: int
    value: Fraction


def catalan(s: int) -> int:
    if s < 0:
        raise InvalidSpecError("catalan index must be >= 0")
    return math.comb(2 * s, s) // (s + 1)


@lru_cache(maxsize=None)
def _gamma_fraction(k: int) -> Fraction:
    if k % 2 == 0:
        t = k // 2
        total = sum(
            (-1) ** s * math.comb(2 * t + 1, s) * Fraction(2 * t - 2 * s + 1, 2) ** (2 * t) for s in range(t + 1)
        )
        return total / math.factorial(2 * t)
    t = (k - 1) // 2
    total = sum((-1) ** s * math.comb(2 * t + 2, s) * Fraction(t - s + 1) ** (2 * t + 1) for s in range(t + 1))
    return total / math.factorial(2 * t + 1)


def gamma_closed(k: int) -> Fraction:
    """Exact ``gamma_k`` from the Irwin-Hall alternating sum."""
    if k < 0:
        raise InvalidSpecError("gamma index must be >= 0")
    return _gamma_fraction(int(k))


# -- quadrature route -------------------------------------------------------

_GL_HEAD = np.polynomial.legendre.leggauss(160)
_GL_HALF = np.polynomial.legendre.leggauss(40)


def _sinc(s):
    return np.sinc(s / np.pi)


def _half_period_integrals(p, count):
    """Integrals of ``sinc(s)**p`` over ``[m pi, (m+1) pi]`` for ``m < count``."""
    x, w = _GL_HEAD
    head = 0.5 * np.pi * np.sum(w * _sinc(0.5 * np.pi * (x + 1.0)) ** p)
    x, w = _GL_HALF
    m = np.arange(1, count)[:, None]
    s = np.pi * (m + 0.5 * (x + 1.0))
    rest = 0.5 * np.pi * np.sum(w * _sinc(s) ** p, axis=1)
    return np.concatenate(([head], rest))


def _euler_limit(partial):
    """Limit of an alternating series from its partial sums by repeated averaging."""
    s = np.asarray(partial, dtype=float)
    while s.size > 1:
        s = 0.5 * (s[:-1] + s[1:])
    return float(s[0])


def _oscillatory_tail(p, omega, start, terms=40):
    """Asymptotic ``int_start^inf exp(i omega s) s**-p ds`` by integration by parts."""
    total = 0j
    coef = 1.0
    z = 1j * omega
    for r in range(terms):
        term = coef / z ** (r + 1) * start ** (-p - r)
        total += term
        if abs(term) < 1e-20 * max(abs(total), 1e-300):
            break
        coef *= p + r
    return -np.exp(1j * omega * start) * total


def _sinc_power_tail(p, start):
    """``int_start^inf (sin s / s)**p ds`` for even ``p`` and ``start`` a multiple of pi."""
    total = 0j
    for q in range(p + 1):
        omega = p - 2 * q
        c = math.comb(p, q) * (-1) ** q
        if omega == 0:
            total += c * start ** (1 - p) / (p - 1)
        else:
            total += c * _oscillatory_tail(p, omega, start)
    return (total / (2j) ** p).real


def gamma_quadrature(k: int, half_periods: int = 48, tol: float = 1e-10) -> float:
    """``gamma_k = (1/pi) int (sin x / x)**(k+1) dx`` by numerical integration.

    The integral is split at multiples of pi.  Odd powers give an alternating
    series of half-period integrals, summed with Euler averaging of partial
    sums; even powers give a positive series whose tail beyond the last half
    period is added from its asymptotic expansion.
    """
    if k < 0:
        raise InvalidSpecError("gamma index must be >= 0")
    p = k + 1
    parts = _half_period_integrals(p, half_periods)
    partial = np.cumsum(parts)
    if p % 2 == 1:
        first = _euler_limit(partial[8:])
        second = _euler_limit(partial[8:-2])
        err = abs(first - second)
        value = first
    else:
        start = half_periods * np.pi
        value = partial[-1] + _sinc_power_tail(p, start)
        coarse = partial[-3] + _sinc_power_tail(p, (half_periods - 2) * np.pi)
        err = abs(value - coarse)
    if err > tol:
        raise AccuracyError(
            f"gamma_{k} quadrature did not converge (estimate {err:.3g} > {tol:.3g})",
            estimate=err,
            diagnostics={"partial_sums": partial[-6:].tolist(), "half_periods": half_periods},
        )
    return 2.0 * value / np.pi


@lru_cache(maxsize=8)
def gamma_table(kmax: int, exact_upto: int = 60) -> np.ndarray:
    """Float ``gamma_0 .. gamma_kmax`` (read-only).

    Exact rationals up to ``exact_upto``; beyond that ``sinc**(k+1)`` is
    concentrated in ``|s| < 9 sqrt(6/(k+1))`` (it is bounded by the Gaussian
    ``exp(-(k+1) s**2 / 6)``) and outside ``[-pi, pi]`` it is below
    ``pi**-(k+1)``, so one Gauss-Legendre rule on that window is exact to
    double precision.
    """
    out = np.empty(kmax + 1)
    head = min(kmax, exact_upto)
    out[: head + 1] = [float(gamma_closed(k)) for k in range(head + 1)]
    if kmax > exact_upto:
        k = np.arange(exact_upto + 1, kmax + 1)[:, None]
        x, w = _GL_HEAD
        upper = np.minimum(np.pi, 9.0 * np.sqrt(6.0 / (k + 1)))
        s = 0.5 * upper * (x + 1.0)
        vals = np.exp((k + 1) * np.log(_sinc(s)))
        out[exact_upto + 1 :] = (2.0 / np.pi) * np.sum(vals * w, axis=1) * 0.5 * upper[:, 0]
    out.flags.writeable = False
    return out


# -- Dyck paths -------------------------------------------------------------


def dyck_count_at(l: int, m: int, k: int) -> int:
    """Number of Dyck paths of length ``l + m`` with height ``k`` after ``l`` steps."""
    if l < 0 or m < 0 or k < 0 or k > min(l, m) or (l - k) % 2 or (m - k) % 2:
        return 0
    num = (k + 1) ** 2 * math.comb(l + 1, (l + k + 2) // 2) * math.comb(m + 1, (m + k + 2) // 2)
    den = (l + 1) * (m + 1)
    q, r = divmod(num, den)
    assert r == 0, (l, m, k)
    return q


def ballot_count(l: int, k: int) -> int:
    """Nonnegative +-1 walks of length ``l`` from 0 ending at height ``k``."""
    if k < 0 or k > l or (l - k) % 2:
        return 0
    return math.comb(l, (l + k) // 2) - math.comb(l, (l + k + 2) // 2)


def dyck_enumerate(length: int):
    """All Dyck paths of ``length`` as height profiles ``(s(0), ..., s(length))``.

    Brute force over all ``2**length`` step sequences; meant as a test oracle.
    """
    if length % 2 or length < 0:
        return []
    if length > 20:
        raise InvalidSpecError("dyck_enumerate is limited to length <= 20")
    paths = []
    for steps in product((1, -1), repeat=length):
        h, profile = 0, [0]
        for st in steps:
            h += st
            if h < 0:
                break
            profile.append(h)
        else:
            if h == 0:
                paths.append(tuple(profile))
    return paths


@lru_cache(maxsize=None)
def _moment_fraction(l: int, m: int) -> Fraction:
    if (l + m) % 2:
        return Fraction(0)
    if l > m:
        l, m = m, l
    total = Fraction(0)
    if l % 2 == 0:
        for k in range(l // 2 + 1):
            total += (
                (2 * k + 1) ** 2
                * math.comb(l + 1, (l - 2 * k) // 2)
                * math.comb(m + 1, (m - 2 * k) // 2)
                * gamma_closed(2 * k)
            )
    else:
        for k in range((l - 1) // 2 + 1):
            total += (
                (2 * k + 2) ** 2
                * math.comb(l + 1, (l - 2 * k - 1) // 2)
                * math.comb(m + 1, (m - 2 * k - 1) // 2)
                * gamma_closed(2 * k + 1)
            )
    return total / ((l + 1) * (m + 1))


def moment_coeff(l: int, m: int) -> MomentCoefficient:
    """Exact ``C_{l,m}``, the limit of ``<x^l, x^m>_n / (sqrt(2) sigma)**(l+m)``."""
    if l < 0 or m < 0:
        raise InvalidSpecError("moment indices must be >= 0")
    return MomentCoefficient(l, m, _moment_fraction(int(l), int(m)))


def bilinear_exact(p, q) -> Fraction:
    """Limit form of two polynomials in the scaled variable ``u = x / (sqrt(2) sigma)``.

    ``p`` and ``q`` are coefficient lists in powers of ``u``; the result
    ``sum_ij p_i q_j C_{i,j}`` is exact when the coefficients are rational.
    """
    total = Fraction(0)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            if b == 0 or (i + j) % 2:
                continue
            total += Fraction(a) * Fraction(b) * _moment_fraction(i, j)
    return total


def limit_bilinear_poly(p, q, sigma: float) -> float:
    """``<p, q> = sum_ij p_i q_j (sqrt(2) sigma)**(i+j) C_{i,j}`` for coefficients in ``x``.

    Only even ``i + j`` contribute, so ``(sqrt(2) sigma)**(i+j) = (2 sigma**2)**((i+j)/2)``
    and the whole sum is evaluated in exact rational arithmetic.
    """
    two_s2 = 2 * Fraction(sigma) ** 2
    total = Fraction(0)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            if b == 0 or (i + j) % 2:
                continue
            total += Fraction(a) * Fraction(b) * two_s2 ** ((i + j) // 2) * _moment_fraction(i, j)
    return float(total)


def chebyshev_u_monomials(n: int):
    """Integer coefficients of the rescaled ``U_n`` in powers of ``u = x / (sqrt(2) sigma)``.

    ``U_n(u) = sum_k (-1)**k binom(n-k, k) u**(n-2k)``, index ``i`` of the result
    holds the coefficient of ``u**i``.
    """
    coeffs = [0] * (n + 1)
    for k in range(n // 2 + 1):
        coeffs[n - 2 * k] = (-1) ** k * math.comb(n - k, k)
    return coeffs
