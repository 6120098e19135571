import math

import numpy as np
import pytest

from bandclt import montecarlo as mc
from bandclt.ensemble import EnsembleSpec
from bandclt.errors import InsufficientDataError, InvalidSpecError, ReplicateFailureError
from bandclt.montecarlo import (
    McConfig,
    calibrate_ks_threshold,
    clt_diagnostics,
    empirical_a,
    empirical_bilinear,
    replicate_spectra,
    run_linear_stat,
    summarize_values,
    sweep_band_scaling,
)
from bandclt.testfunctions import named, polynomial
from bandclt.varengine import a_limit

SPEC = EnsembleSpec.build(96, 12, seed=8)
X2 = polynomial([0, 0, 1])


def test_constant_phi_has_zero_variance():
    s = run_linear_stat(McConfig(SPEC, polynomial([2.5]), 20))
    assert s.variance == 0.0 and s.ci_low == 0.0 and s.ci_high == 0.0


def test_repeatable_and_worker_independent():
    a = run_linear_stat(McConfig(SPEC, X2, 24, workers=1))
    b = run_linear_stat(McConfig(SPEC, X2, 24, workers=1))
    c = run_linear_stat(McConfig(SPEC, X2, 24, workers=3))
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.values, c.values)
    assert a.to_dict() == c.to_dict()


def test_precomputed_spectra_give_same_values():
    spectra = replicate_spectra(SPEC, 10)
    a = run_linear_stat(McConfig(SPEC, X2, 10), spectra=spectra)
    b = run_linear_stat(McConfig(SPEC, X2, 10))
    assert np.array_equal(a.values, b.values)
    with pytest.raises(InvalidSpecError):
        run_linear_stat(McConfig(SPEC, X2, 11), spectra=spectra)


def test_statistic_normalization():
    s = run_linear_stat(McConfig(SPEC, polynomial([1.0]), 2))
    assert s.values[0] == pytest.approx(math.sqrt(12 / 96) * 96)


def test_summary_fields():
    s = run_linear_stat(McConfig(SPEC, X2, 120))
    d = s.to_dict()
    assert list(d) == ["n", "b", "phi", "variance", "ci_low", "ci_high", "skew", "exkurt", "ks", "failures"]
    assert d["ci_low"] < d["variance"] < d["ci_high"]
    assert abs(np.mean(s.centered)) < 1e-12


def test_config_validation():
    with pytest.raises(InvalidSpecError):
        McConfig(SPEC, X2, 1)
    with pytest.raises(InvalidSpecError):
        McConfig(SPEC, X2, 5, workers=0)


def test_unpicklable_phi_rejected_for_workers():
    phi = named("tanh").scaled(2.0)
    with pytest.raises(InvalidSpecError):
        run_linear_stat(McConfig(SPEC, phi, 4, workers=2))
    assert run_linear_stat(McConfig(SPEC, phi, 4, workers=1)).variance > 0


def test_failures_counted_and_abort(monkeypatch):
    real = mc._stat_task

    def flaky(spec, rep, payload):
        if rep in fail:
            raise np.linalg.LinAlgError("no convergence")
        return real(spec, rep, payload)

    monkeypatch.setattr(mc, "_stat_task", flaky)
    fail = {3}
    s = run_linear_stat(McConfig(SPEC, X2, 200))
    assert s.failures == 1 and s.values.size == 199
    fail = {1, 2, 3}
    with pytest.raises(ReplicateFailureError):
        run_linear_stat(McConfig(SPEC, X2, 200))


def test_clt_diagnostics_on_exact_normal():
    x = np.random.default_rng(4).standard_normal(100_000)
    d = clt_diagnostics(x)
    assert abs(d.skew) < 0.05 and abs(d.exkurt) < 0.1 and d.ks < 0.01
    assert not d.degenerate


def test_clt_diagnostics_degenerate_and_insufficient():
    d = clt_diagnostics(np.ones(150))
    assert d.degenerate and d.ks is None
    with pytest.raises(InsufficientDataError):
        clt_diagnostics(np.arange(50.0))


def test_ks_threshold_calibration():
    thr = calibrate_ks_threshold(1000, batches=1000)
    # Lilliefors 1% critical value is about 1.031 / sqrt(n)
    assert thr == pytest.approx(1.031 / math.sqrt(1000), rel=0.1)
    assert calibrate_ks_threshold(1000, batches=1000) == thr


def test_variance_ci_coverage():
    rng = np.random.default_rng(17)
    v = 3.0
    covered = 0
    for _ in range(100):
        s = summarize_values(rng.normal(0.0, math.sqrt(v), 200))
        covered += s.ci_low <= v <= s.ci_high
    assert covered >= 90


def test_bilinear_trivial_and_symmetric():
    ones = polynomial([1.0])
    res = empirical_bilinear(SPEC, ones, ones, 3)
    np.testing.assert_allclose(res.values, 1.0, atol=1e-12)
    f, g = polynomial([0, 1]), named("tanh")
    a = empirical_bilinear(SPEC, f, g, 3)
    b = empirical_bilinear(SPEC, g, f, 3)
    assert np.abs(a.values - b.values).max() < 1e-12


def test_bilinear_linear_close_to_two():
    res = empirical_bilinear(EnsembleSpec.build(400, 60, seed=1), polynomial([0, 1]), polynomial([0, 1]), 4)
    assert res.mean == pytest.approx(2.0, rel=0.05)


def test_empirical_a_basics():
    spec = EnsembleSpec.build(300, 60, seed=2)
    res = empirical_a(spec, polynomial([0, 1]), [0.0, 0.5, 1.0], 6)
    assert res.values[0] == 0
    for t, v in zip(res.t[1:], res.values[1:]):
        assert v.real == pytest.approx(a_limit(t, polynomial([0, 1]), 1.0).real, rel=0.05)
    with pytest.raises(InvalidSpecError):
        empirical_a(spec, polynomial([0, 1]), [1.0, 0.5], 2)
    with pytest.raises(InvalidSpecError):
        empirical_a(spec, polynomial([0, 1]), [1.0], 2, panels_per_unit=10)


def test_empirical_a_matches_direct_matrix_exponential():
    spec = EnsembleSpec.build(40, 6, seed=3)
    phi = named("tanh")
    res = empirical_a(spec, phi, [0.8], 1)
    from bandclt.ensemble import band_mask, sample
    from bandclt.spectral import eigenvalues, matrix_function
    from scipy import integrate

    s = eigenvalues(sample(spec, 0), vectors=True)
    mask = band_mask(40, 6)
    dphi = matrix_function(s, phi.derivative)

    def integrand(t):
        u = matrix_function(s, lambda x: np.exp(1j * t * x))
        val = np.sum(u * dphi, where=mask)
        return np.array([val.real, val.imag])

    ref, _ = integrate.quad_vec(integrand, 0, 0.8, epsabs=1e-12)
    expected = -2.0 / 40 * (ref[0] + 1j * ref[1])
    assert abs(res.values[0] - expected) < 1e-9


def test_sweep_single_and_ordering():
    base = McConfig(SPEC, X2, 6)
    rows = sweep_band_scaling(base, [12])
    direct = run_linear_stat(base)
    assert len(rows) == 1 and rows[0].variance == direct.variance
    rows = sweep_band_scaling(base, [20, 4, 12])
    assert [r.b for r in rows] == [4, 12, 20]


@pytest.mark.slow
def test_sweep_band_independence():
    base = McConfig(EnsembleSpec.build(512, 32, seed=6), X2, 300)
    rows = sweep_band_scaling(base, [32, 64, 128])
    v = [r.variance for r in rows]
    assert max(v) / min(v) < 1.2
