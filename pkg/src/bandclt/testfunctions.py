"""Test functions ``phi`` for linear eigenvalue statistics.

A :class:`TestFunction` evaluates ``phi`` and ``phi'`` on arrays.  Two
variants exist: polynomials (exact coefficient access, used by the exact
combinatorial routes) and a registry of named smooth functions.
"""
from __future__ import annotations

import re

import numpy as np
from numpy.polynomial import Polynomial

from .errors import InvalidSpecError

__all__ = ["TestFunction", "polynomial", "named", "parse_test_function", "NAMED_FUNCTIONS"]


def _sech2(x):
    return 1.0 / np.cosh(x) ** 2


# name -> (phi, phi', smoothness note)
NAMED_FUNCTIONS = {
    "tanh": (np.tanh, _sech2, "analytic, bounded derivative"),
    "gauss": (lambda x: np.exp(-0.5 * x**2), lambda x: -x * np.exp(-0.5 * x**2), "analytic, Schwartz class"),
    "cos": (np.cos, lambda x: -np.sin(x), "entire, bounded derivative"),
    "sin": (np.sin, np.cos, "entire, bounded derivative"),
    "lorentz": (lambda x: 1.0 / (1.0 + x**2), lambda x: -2.0 * x / (1.0 + x**2) ** 2, "analytic on the real line"),
    "exp": (np.exp, np.exp, "entire; derivative unbounded on R, bounded on the spectrum"),
}


class TestFunction:
    """Evaluatable ``phi`` with derivative.

    Use :func:`polynomial` or :func:`named` to build one.  Instances are
    callable and vectorized over numpy arrays.
    """

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, name, func, deriv, coefficients=None, smoothness=""):
        self.name = name
        self._func = func
        self._deriv = deriv
        self.coefficients = None if coefficients is None else tuple(float(c) for c in coefficients)
        self.smoothness = smoothness

    @property
    def is_polynomial(self):
        return self.coefficients is not None

    @property
    def degree(self):
        if self.coefficients is None:
            return None
        nz = [i for i, c in enumerate(self.coefficients) if c != 0.0]
        return nz[-1] if nz else 0

    def __call__(self, x):
        return self._func(np.asarray(x, dtype=float))

    def derivative(self, x):
        return self._deriv(np.asarray(x, dtype=float))

    def scaled(self, a):
        """Return ``a * phi``."""
        coeffs = None if self.coefficients is None else [a * c for c in self.coefficients]
        return TestFunction(
            f"{a!r}*{self.name}", lambda x: a * self._func(x), lambda x: a * self._deriv(x), coeffs, self.smoothness
        )

    def shifted(self, c):
        """Return ``phi + c``."""
        coeffs = None
        if self.coefficients is not None:
            coeffs = list(self.coefficients)
            coeffs[0] += c
        return TestFunction(f"{self.name}+{c!r}", lambda x: self._func(x) + c, self._deriv, coeffs, self.smoothness)

    def to_spec(self):
        if self.coefficients is not None:
            return {"poly": list(self.coefficients)}
        return self.name

    def __repr__(self):
        return f"TestFunction({self.name!r})"


def polynomial(coefficients, name=None) -> TestFunction:
    """Polynomial ``sum_i coefficients[i] * x**i``."""
    coeffs = [float(c) for c in coefficients]
    if not coeffs:
        raise InvalidSpecError("polynomial needs at least one coefficient", field="phi")
    p = Polynomial(coeffs)
    dp = p.deriv()
    return TestFunction(name or _poly_name(coeffs), p, dp, coeffs, "polynomial")


def _poly_name(coeffs):
    terms = []
    for i, c in enumerate(coeffs):
        if c == 0.0:
            continue
        mono = "1" if i == 0 else ("x" if i == 1 else f"x^{i}")
        terms.append(mono if c == 1.0 and i > 0 else f"{c:g}*{mono}" if i > 0 else f"{c:g}")
    return "+".join(terms) or "0"


def named(name) -> TestFunction:
    try:
        f, df, note = NAMED_FUNCTIONS[name]
    except KeyError:
        raise InvalidSpecError(
            f"unknown test function {name!r}; known: {sorted(NAMED_FUNCTIONS)}", field="phi"
        ) from None
    return TestFunction(name, f, df, None, note)


_MONO = re.compile(r"^x(?:\^(\d+))?$")


def parse_test_function(spec) -> TestFunction:
    """Build a test function from a config value.

    Accepted forms: a number (constant), ``"x"``, ``"x^k"``, a registry name,
    ``{"poly": [a0, a1, ...]}`` or ``{"named": "tanh"}``.
    """
    if isinstance(spec, TestFunction):
        return spec
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return polynomial([spec])
    if isinstance(spec, str):
        s = spec.replace(" ", "").replace("**", "^")
        m = _MONO.match(s)
        if m:
            k = int(m.group(1) or 1)
            return polynomial([0.0] * k + [1.0])
        try:
            return polynomial([float(s)])
        except ValueError:
            return named(s)
    if isinstance(spec, dict) and len(spec) == 1:
        if "poly" in spec:
            return polynomial(spec["poly"])
        if "named" in spec:
            return named(spec["named"])
    raise InvalidSpecError(f"cannot interpret test function {spec!r}", field="phi")
