"""Replicate orchestration for the normalized linear eigenvalue statistic.

Each replicate ``r`` of an ensemble is a pure function of ``(seed, r)``, and
every per-replicate computation runs with single-threaded BLAS.  Results are
therefore bit-identical whatever the number of worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats
from threadpoolctl import threadpool_limits

from .ensemble import EnsembleSpec, band_mask, sample
from .errors import InsufficientDataError, InvalidSpecError, NumericInputError, ReplicateFailureError
from .spectral import eigenvalues, linear_statistic, matrix_function
from .testfunctions import TestFunction, parse_test_function

__all__ = [
    "McConfig",
    "McSummary",
    "CltDiagnostics",
    "BilinearResult",
    "AResult",
    "SweepRow",
    "replicate_map",
    "replicate_spectra",
    "normalization",
    "summarize_values",
    "run_linear_stat",
    "clt_diagnostics",
    "calibrate_ks_threshold",
    "empirical_bilinear",
    "empirical_a",
    "sweep_band_scaling",
]

MAX_FAILURE_RATE = 0.01
MIN_CLT_SAMPLES = 100


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo run: ensemble (which carries the master seed), test function, replicates, workers."""

    ensemble: EnsembleSpec
    phi: TestFunction
    replicates: int
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 2:
            raise InvalidSpecError("replicates must be >= 2", field="replicates")
        if self.workers < 1:
            raise InvalidSpecError("workers must be >= 1", field="workers")

    @property
    def seed(self):
        return self.ensemble.seed


# -- replicate execution ----------------------------------------------------

_FAILURES = (np.linalg.LinAlgError, NumericInputError)


def _run_task(args):
    func, spec, rep, payload = args
    with threadpool_limits(limits=1):
        try:
            return func(spec, rep, payload)
        except _FAILURES:
            return None


def replicate_map(func, spec: EnsembleSpec, reps: int, workers: int = 1, payload=None) -> list:
    """``[func(spec, r, payload) for r in range(reps)]``, possibly across processes.

    ``func`` must be a module-level function.  A replicate whose eigensolve
    fails yields ``None``.
    """
    tasks = ((func, spec, rep, payload) for rep in range(reps))
    if workers <= 1 or reps <= 1:
        return [_run_task(t) for t in tasks]
    chunk = max(1, reps // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks, chunksize=chunk))


def _spectrum_task(spec, rep, vectors):
    return eigenvalues(sample(spec, rep), vectors=vectors)


def replicate_spectra(spec: EnsembleSpec, reps: int, workers: int = 1, vectors: bool = False) -> list:
    """Spectra of replicates ``0..reps-1`` (``None`` for failed eigensolves)."""
    return replicate_map(_spectrum_task, spec, reps, workers, vectors)


def _phi_payload(phi):
    spec = phi.to_spec()
    try:
        parse_test_function(spec)
    except InvalidSpecError:
        raise InvalidSpecError(
            f"test function {phi.name!r} cannot be sent to worker processes; use workers=1", field="phi"
        ) from None
    return spec


def _resolve_phi(payload):
    return payload if isinstance(payload, TestFunction) else parse_test_function(payload)


# -- linear statistic ---------------------------------------------------------


def normalization(spec: EnsembleSpec) -> float:
    """``(b / n) ** 0.5``; the diagonal ensemble ``b = 0`` uses ``(1 / n) ** 0.5``."""
    return math.sqrt(max(spec.band_radius, 1) / spec.n)


def _stat_task(spec, rep, phi_payload):
    s = eigenvalues(sample(spec, rep))
    return normalization(spec) * linear_statistic(s, _resolve_phi(phi_payload))


@dataclass
class CltDiagnostics:
    skew: float | None
    exkurt: float | None
    ks: float | None
    ks_pvalue: float | None
    degenerate: bool
    count: int

    def passes(self, ks_threshold, skew_tol=0.25, exkurt_tol=0.5):
        if self.degenerate:
            return False
        return abs(self.skew) <= skew_tol and abs(self.exkurt) <= exkurt_tol and self.ks <= ks_threshold


def clt_diagnostics(samples) -> CltDiagnostics:
    """Skewness, excess kurtosis and KS distance to the fitted normal.

    The KS p-value ignores that mean and variance were estimated, so it is
    conservative; compare ``ks`` against :func:`calibrate_ks_threshold`.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < MIN_CLT_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_CLT_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NumericInputError("samples contain NaN or infinite values")
    if np.ptp(x) == 0:
        return CltDiagnostics(None, None, None, None, True, x.size)
    skew = float(stats.skew(x))
    exkurt = float(stats.kurtosis(x))
    res = stats.kstest(x, "norm", args=(x.mean(), x.std(ddof=1)))
    return CltDiagnostics(skew, exkurt, float(res.statistic), float(res.pvalue), False, x.size)


def calibrate_ks_threshold(sample_size: int, batches: int = 2000, quantile: float = 0.99, seed: int = 0) -> float:
    """Quantile of the fitted-normal KS distance for exact normal samples of ``sample_size``."""
    rng = np.random.Generator(np.random.Philox(seed))
    x = np.sort(rng.standard_normal((batches, sample_size)), axis=1)
    z = (x - x.mean(axis=1, keepdims=True)) / x.std(axis=1, ddof=1, keepdims=True)
    f = special.ndtr(z)
    i = np.arange(1, sample_size + 1)
    d = np.maximum((i / sample_size - f).max(axis=1), (f - (i - 1) / sample_size).max(axis=1))
    return float(np.quantile(d, quantile))


@dataclass
class McSummary:
    n: int
    b: int
    phi: object
    values: np.ndarray = field(repr=False)
    mean: float
    variance: float
    ci_low: float
    ci_high: float
    diagnostics: CltDiagnostics | None
    failures: int

    @property
    def centered(self):
        return self.values - self.mean

    def to_dict(self):
        d = self.diagnostics
        return {
            "n": self.n,
            "b": self.b,
            "phi": self.phi,
            "variance": self.variance,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "skew": None if d is None else d.skew,
            "exkurt": None if d is None else d.exkurt,
            "ks": None if d is None else d.ks,
            "failures": self.failures,
        }


def summarize_values(values, n=0, b=0, phi=None, failures=0, level=0.95) -> McSummary:
    """Sample mean, variance of centered values and a chi-square CI for the variance."""
    x = np.asarray(values, dtype=float)
    m = x.size
    if m < 2:
        raise InsufficientDataError("need at least 2 values for a variance")
    mean = float(np.mean(x))
    if np.ptp(x) == 0:
        var = lo = hi = 0.0
    else:
        var = float(np.sum((x - mean) ** 2) / (m - 1))
        alpha = 1.0 - level
        lo = (m - 1) * var / stats.chi2.ppf(1.0 - alpha / 2, m - 1)
        hi = (m - 1) * var / stats.chi2.ppf(alpha / 2, m - 1)
    diag = clt_diagnostics(x) if m >= MIN_CLT_SAMPLES else None
    return McSummary(n, b, phi, x, mean, var, float(lo), float(hi), diag, failures)


def _collect(results, what):
    failures = sum(r is None for r in results)
    if failures > MAX_FAILURE_RATE * len(results):
        raise ReplicateFailureError(f"{failures} of {len(results)} replicates failed in {what}", failures=failures)
    return [r for r in results if r is not None], failures


def run_linear_stat(cfg: McConfig, spectra=None) -> McSummary:
    """Empirical fluctuations of ``(b/n)**0.5 * sum_l phi(lambda_l)``.

    ``spectra`` may supply precomputed spectra for replicates
    ``0..cfg.replicates-1`` (for example from :func:`replicate_spectra`).
    """
    spec = cfg.ensemble
    if spectra is None:
        payload = _phi_payload(cfg.phi) if cfg.workers > 1 else cfg.phi
        results = replicate_map(_stat_task, spec, cfg.replicates, cfg.workers, payload)
    else:
        spectra = list(spectra)[: cfg.replicates]
        if len(spectra) < cfg.replicates:
            raise InvalidSpecError(f"only {len(spectra)} spectra for {cfg.replicates} replicates", field="spectra")
        norm = normalization(spec)
        results = [None if s is None else norm * linear_statistic(s, cfg.phi) for s in spectra]
    values, failures = _collect(results, "run_linear_stat")
    return summarize_values(values, spec.n, spec.band_radius, cfg.phi.to_spec(), failures)


@dataclass
class SweepRow:
    b: int
    variance: float
    ci_low: float
    ci_high: float
    failures: int

    def to_dict(self):
        return dict(self.__dict__)


def sweep_band_scaling(base: McConfig, b_list) -> list[SweepRow]:
    """``run_linear_stat`` for each band radius (ascending), same master seed."""
    rows = []
    for b in sorted(set(int(b) for b in b_list)):
        spec = base.ensemble.with_band(b)
        cfg = McConfig(spec, base.phi, base.replicates, base.workers)
        s = run_linear_stat(cfg)
        rows.append(SweepRow(b, s.variance, s.ci_low, s.ci_high, s.failures))
    return rows


# -- bilinear form and A_n ----------------------------------------------------


@dataclass
class BilinearResult:
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    values: np.ndarray = field(repr=False)
    failures: int = 0

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr, "ci_low": self.ci_low, "ci_high": self.ci_high,
                "reps": int(self.values.size), "failures": self.failures}


def _mean_ci(values, level=0.95):
    x = np.asarray(values, dtype=float)
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    q = stats.t.ppf(0.5 + level / 2, max(x.size - 1, 1))
    return mean, se, float(mean - q * se), float(mean + q * se)


def _bilinear_task(spec, rep, payload):
    f, g = (_resolve_phi(p) for p in payload)
    s = eigenvalues(sample(spec, rep), vectors=True)
    mask = band_mask(spec.n, spec.band_radius, spec.topology)
    fm = matrix_function(s, f)
    gm = matrix_function(s, g)
    return float(np.sum(fm * gm, where=mask)) / spec.n


def empirical_bilinear(spec: EnsembleSpec, f: TestFunction, g: TestFunction, reps: int,
                       workers: int = 1) -> BilinearResult:
    """``n**-1 sum_{(j,k) in band} f(M)_jk g(M)_jk`` averaged over replicates."""
    if reps < 2:
        raise InvalidSpecError("reps must be >= 2", field="reps")
    payload = (_phi_payload(f), _phi_payload(g)) if workers > 1 else (f, g)
    values, failures = _collect(replicate_map(_bilinear_task, spec, reps, workers, payload), "empirical_bilinear")
    mean, se, lo, hi = _mean_ci(values)
    return BilinearResult(mean, se, lo, hi, np.asarray(values), failures)


@dataclass
class AResult:
    t: list
    values: list
    stderr: list
    reps: int
    failures: int = 0
    per_replicate: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        return {
            "t": list(self.t),
            "re": [v.real for v in self.values],
            "im": [v.imag for v in self.values],
            "stderr": list(self.stderr),
            "reps": self.reps,
            "failures": self.failures,
        }


def _simpson_grid(t, panels_per_unit):
    panels = max(2, 2 * math.ceil(panels_per_unit * t / 2))
    s = np.linspace(0.0, t, panels + 1)
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return s, w * (t / panels) / 3.0


def _a_task(spec, rep, payload):
    phi_payload, t_grid, panels_per_unit = payload
    phi = _resolve_phi(phi_payload)
    s = eigenvalues(sample(spec, rep), vectors=True)
    q = s.vectors
    mask = band_mask(spec.n, spec.band_radius, spec.topology)
    dphi = np.where(mask, matrix_function(s, phi.derivative), 0.0)
    # sum_{(j,k) in band} U(t)_jk phi'(M)_jk = sum_a exp(i t lam_a) h_a
    h = np.sum(q * (dphi @ q), axis=0)
    out = []
    for t in t_grid:
        if t == 0:
            out.append(0j)
            continue
        grid, w = _simpson_grid(t, panels_per_unit)
        integral = w @ (np.exp(1j * np.multiply.outer(grid, s.eigenvalues)) @ h)
        out.append(complex(-2.0 * spec.sigma**2 / spec.n * integral))
    return np.array(out)


def empirical_a(spec: EnsembleSpec, phi: TestFunction, t_grid, reps: int, workers: int = 1,
                panels_per_unit: int = 64) -> AResult:
    """``A_n(t) = -(2 sigma**2 / n) int_0^t sum_band E U_jk(s) phi'(M)_jk ds`` on ``t_grid``.

    The ``s`` integral uses composite Simpson with ``panels_per_unit`` panels
    per unit length.
    """
    t_grid = [float(t) for t in t_grid]
    if any(t < 0 for t in t_grid) or t_grid != sorted(t_grid):
        raise InvalidSpecError("t_grid must be sorted and nonnegative", field="t_grid")
    if reps < 1:
        raise InvalidSpecError("reps must be >= 1", field="reps")
    if panels_per_unit < 64:
        raise InvalidSpecError("panels_per_unit must be >= 64", field="panels_per_unit")
    payload = (_phi_payload(phi) if workers > 1 else phi, t_grid, panels_per_unit)
    values, failures = _collect(replicate_map(_a_task, spec, reps, workers, payload), "empirical_a")
    arr = np.array(values)
    mean = arr.mean(axis=0)
    se = arr.std(axis=0, ddof=1) / math.sqrt(arr.shape[0]) if arr.shape[0] > 1 else np.zeros(len(t_grid))
    return AResult(t_grid, [complex(v) for v in mean], [float(e) for e in se], arr.shape[0], failures, arr)

