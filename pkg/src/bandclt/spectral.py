"""Eigendecomposition, linear statistics, matrix functions and norm experiments."""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla

from .ensemble import BandMatrix, EnsembleSpec, band_mask, sample
from .errors import InvalidSpecError, NumericInputError
from .varengine import semicircle_cdf

__all__ = [
    "Spectrum",
    "eigenvalues",
    "linear_statistic",
    "matrix_function",
    "semicircle_distance",
    "haar_orthogonal",
    "BandNormResult",
    "banded_unitary_norm",
    "fit_log_trend",
    "ResolventResult",
    "resolvent_offdiag_mean",
    "TailResult",
    "spectral_radius_tail",
]


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues, optionally with orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    vectors: np.ndarray | None = None

    @property
    def n(self):
        return self.eigenvalues.size

    @property
    def norm(self):
        """Operator norm ``max |lambda|``."""
        return float(np.max(np.abs(self.eigenvalues), initial=0.0))

    def reconstruct(self):
        if self.vectors is None:
            raise InvalidSpecError("spectrum was computed without eigenvectors")
        q = self.vectors
        return (q * self.eigenvalues) @ q.T


def _as_array(m):
    a = m.values if isinstance(m, BandMatrix) else np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidSpecError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericInputError("matrix contains NaN or infinite entries")
    return a


def eigenvalues(m, vectors: bool = False) -> Spectrum:
    """Symmetric eigendecomposition of ``m`` (``BandMatrix`` or square array).

    Only the lower triangle is referenced.
    """
    a = _as_array(m)
    if vectors:
        lam, q = np.linalg.eigh(a)
        return Spectrum(lam, q)
    return Spectrum(np.linalg.eigvalsh(a))


def linear_statistic(s: Spectrum, phi) -> float:
    """``sum_l phi(lambda_l) = Tr phi(M)``."""
    vals = np.asarray(phi(s.eigenvalues))
    if vals.shape == ():
        return float(vals) * s.n
    return float(np.sum(vals))


def matrix_function(m, f) -> np.ndarray:
    """``Q f(Lambda) Q^T``; ``m`` is a matrix or a :class:`Spectrum` with vectors."""
    s = m if isinstance(m, Spectrum) else eigenvalues(m, vectors=True)
    if s.vectors is None:
        raise InvalidSpecError("matrix_function needs eigenvectors")
    fl = np.asarray(f(s.eigenvalues))
    if fl.shape == ():
        fl = np.full(s.n, fl)
    q = s.vectors
    return (q * fl) @ q.T


def semicircle_distance(s: Spectrum, sigma: float) -> float:
    """Kolmogorov distance between the empirical spectral distribution and the semicircle."""
    lam = np.sort(s.eigenvalues)
    n = lam.size
    f = semicircle_cdf(lam, sigma)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(n) / n
    return float(max(upper.max(), lower.max()))


# -- banded unitary norm ------------------------------------------------------


def _rng(seed, rep):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(rep,))))


def haar_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix from the QR factorization of a Gaussian matrix, diagonal of R made positive."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.where(np.diag(r) < 0, -1.0, 1.0)


@dataclass
class BandNormResult:
    band_radius: int
    mean: float
    std: float
    norms: list

    def to_dict(self):
        return asdict(self)


def banded_unitary_norm(n: int, band_radii, reps: int, seed: int = 0) -> list[BandNormResult]:
    """Operator norms of ``Q`` restricted to the periodic band set, for each radius.

    Every replicate draws one orthogonal ``Q`` and bands it at all radii, so
    the per-radius results share random numbers.
    """
    radii = [int(band_radii)] if np.isscalar(band_radii) else [int(b) for b in band_radii]
    if reps < 1:
        raise InvalidSpecError("reps must be >= 1", field="reps")
    masks = [band_mask(n, b) for b in radii]
    norms = np.empty((len(radii), reps))
    for rep in range(reps):
        q = haar_orthogonal(n, _rng(seed, rep))
        for i, mask in enumerate(masks):
            norms[i, rep] = sla.svdvals(np.where(mask, q, 0.0), check_finite=False)[0]
    return [
        BandNormResult(b, float(row.mean()), float(row.std(ddof=1)) if reps > 1 else 0.0, row.tolist())
        for b, row in zip(radii, norms)
    ]


def fit_log_trend(band_radii, values):
    """Least squares ``values ~ a + c log(b + 1)``; returns ``(a, c, r_squared)``."""
    x = np.log(np.asarray(band_radii, dtype=float) + 1.0)
    y = np.asarray(values, dtype=float)
    design = np.column_stack([np.ones_like(x), x])
    (a, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    ss_res = float(np.sum((y - a - c * x) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(c), r2


# -- resolvent ---------------------------------------------------------------


@dataclass
class ResolventResult:
    value: float
    reps: int
    z: complex
    identity_residual: float | None
    warning: str | None = None

    def to_dict(self):
        out = asdict(self)
        out["z"] = [self.z.real, self.z.imag]
        return out


def resolvent_offdiag_mean(spec: EnsembleSpec, z: complex, reps: int) -> ResolventResult:
    """``max_{p != s} |mean_reps R_ps(z)|`` with ``R(z) = (z - M)^{-1}``.

    For ``|Im z| >= 0.5`` each replicate also reports ``max |(z - M) R - I|``;
    the largest value is returned as ``identity_residual``.
    """
    z = complex(z)
    if z.imag == 0:
        raise InvalidSpecError("z must have nonzero imaginary part", field="z")
    if reps < 1:
        raise InvalidSpecError("reps must be >= 1", field="reps")
    note = None
    if abs(z.imag) < 1e-3:
        note = f"|Im z| = {abs(z.imag):.3g} < 1e-3: resolvent is ill-conditioned"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    n = spec.n
    acc = np.zeros((n, n), dtype=complex)
    residual = 0.0 if abs(z.imag) >= 0.5 else None
    for rep in range(reps):
        m = sample(spec, rep).values
        s = eigenvalues(m, vectors=True)
        r = matrix_function(s, lambda lam: 1.0 / (z - lam))
        acc += r
        if residual is not None:
            res = (z * r - m @ r) - np.eye(n)
            residual = max(residual, float(np.abs(res).max()))
    acc /= reps
    np.fill_diagonal(acc, 0.0)
    return ResolventResult(float(np.abs(acc).max()), reps, z, residual, note)


# -- spectral radius ---------------------------------------------------------


@dataclass
class TailResult:
    fraction: float
    max_norm: float
    reps: int
    threshold: float

    def to_dict(self):
        return asdict(self)


def spectral_radius_tail(spec: EnsembleSpec, reps: int, spectra=None, threshold: float = 10.0) -> TailResult:
    """Fraction of replicates with ``||M|| >= threshold * sigma`` and the largest ``||M||``.

    ``spectra`` may supply precomputed :class:`Spectrum` objects for
    replicates ``0..reps-1``.  A zero-norm matrix never counts as exceeding.
    """
    if reps < 1:
        raise InvalidSpecError("reps must be >= 1", field="reps")
    if spectra is None:
        spectra = (eigenvalues(sample(spec, rep)) for rep in range(reps))
    norms = np.array([s.norm for _, s in zip(range(reps), spectra)])
    if norms.size < reps:
        raise InvalidSpecError(f"only {norms.size} spectra supplied for {reps} reps", field="spectra")
    limit = threshold * spec.sigma
    exceed = (norms >= limit) & (norms > 0)
    return TailResult(float(exceed.mean()), float(norms.max()), reps, limit)

