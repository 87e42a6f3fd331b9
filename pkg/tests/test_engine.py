import numpy as np
import pytest
from scipy import stats

from possim import rng as prng
from possim.engine import (
    MonteCarloConfig,
    confidence_region,
    contour_mc,
    contour_mc_detail,
    contour_wilks,
    im_from_confidence_family,
    im_from_test_family,
    likelihood_contour,
    test_hypothesis,
    validity_diagnostic,
)
from possim.errors import DomainError, NestingError, NormalizationError
from possim.models import Dataset, Normal, NormalKnownSigma, fixture, mle
from possim.possibility import HypothesisSet

from oracles import darwin_t_pvalue, known_sigma_contour


def test_config_limits():
    with pytest.raises(ValueError):
        MonteCarloConfig(M=50)
    with pytest.warns(UserWarning):
        MonteCarloConfig(M=500)


def test_known_sigma_contour_matches_z_pvalue():
    z = Dataset(np.array([1.96]))
    v = contour_mc(NormalKnownSigma(1.0), z, [0.0], MonteCarloConfig(M=200_000, seed=1))
    assert v == pytest.approx(known_sigma_contour(1.96, 0.0, 1.0, 1), abs=4 * np.sqrt(0.05 * 0.95 / 200_000))


def test_contour_at_mle_is_one():
    z = fixture("darwin")
    that, _ = mle(Normal(), z)
    assert contour_mc(Normal(), z, that, MonteCarloConfig(M=1000)) == 1.0


def test_outside_domain_is_zero():
    z = fixture("darwin")
    C = likelihood_contour(Normal(), z, "mc", MonteCarloConfig(M=1000))
    assert C([0.0, -1.0]) == 0.0


def test_pivotal_and_mc_agree():
    z = fixture("darwin")
    cfg = MonteCarloConfig(M=20_000, seed=2)
    th = np.array([0.0, 40.0])
    a = contour_mc(Normal(), z, th, cfg)
    b = likelihood_contour(Normal(), z, "pivotal", cfg)(th)
    assert a == pytest.approx(b, abs=0.02)


def test_wilks_close_for_large_n():
    m = Normal()
    y = m.simulate(np.array([0.0, 1.0]), 400, np.random.default_rng(0), 1)[0]
    z = Dataset(y)
    th = np.array([0.05, 1.05])
    assert contour_wilks(m, z, th) == pytest.approx(contour_mc(m, z, th, MonteCarloConfig(M=20_000, seed=3)), abs=0.03)


def test_mc_result_reports_standard_error():
    r = contour_mc_detail(Normal(), fixture("darwin"), [0.0, 40.0], MonteCarloConfig(M=4000))
    assert r.se == pytest.approx(np.sqrt(r.value * (1 - r.value) / 4000))
    assert r.redraws == 0


def test_determinism_across_thread_counts():
    z = fixture("darwin")
    cfg = MonteCarloConfig(M=5000, seed=9)
    prng.set_threads(1)
    a = contour_mc(Normal(), z, [5.0, 30.0], cfg)
    prng.set_threads(4)
    b = contour_mc(Normal(), z, [5.0, 30.0], cfg)
    prng.set_threads(None)
    assert a == b


def test_confidence_region_requires_mle_inside_grid():
    z = fixture("darwin")
    C = likelihood_contour(Normal(), z, "wilks")
    grid = np.array([[x, s] for x in np.linspace(40, 60, 5) for s in np.linspace(20, 50, 5)])
    with pytest.raises(DomainError):
        confidence_region(C, 0.05, grid)


def test_confidence_region_nested():
    z = fixture("darwin")
    C = likelihood_contour(Normal(), z, "wilks")
    grid = np.array([[x, s] for x in np.linspace(-20, 60, 17) for s in np.linspace(15, 80, 14)])
    r10 = confidence_region(C, 0.10, grid)
    r05 = r10.at(0.05)
    assert np.all(r05.mask[r10.mask])


def test_test_hypothesis_rejects_iff_low_plausibility():
    z = fixture("darwin")
    C = likelihood_contour(Normal(), z, "pivotal", MonteCarloConfig(M=20_000))
    H = HypothesisSet.grid([[0.0, 40.0]])
    res = test_hypothesis(C, H, 0.05)
    assert res.reject == (res.plausibility <= 0.05)


def _t_rejection(alpha):
    def rejects(y):
        return stats.ttest_1samp(y, 0.0).pvalue <= alpha
    return rejects


def test_test_family_reproduces_pvalue():
    y = fixture("darwin").y
    H0 = HypothesisSet.grid([[0.0]])
    c = im_from_test_family(_t_rejection, H0, y)
    assert c.null_plausibility == pytest.approx(darwin_t_pvalue(), abs=1e-6)
    assert c([1.0]) == 1.0


def test_test_family_requires_nesting():
    def bad(alpha):
        return lambda y: 0.3 < alpha < 0.6
    with pytest.raises(NestingError):
        im_from_test_family(bad, HypothesisSet.grid([[0.0]]), np.zeros(3))


def _t_interval(y, alpha):
    n = y.size
    m, s = y.mean(), y.std(ddof=1)
    if alpha >= 1:
        return lambda phi: abs(phi[0] - m) <= 0
    h = stats.t.ppf(1 - alpha / 2, n - 1) * s / np.sqrt(n) if alpha > 0 else np.inf
    return lambda phi: abs(phi[0] - m) <= h


def test_confidence_family_round_trip():
    y = fixture("darwin").y
    c = im_from_confidence_family(_t_interval, lambda t: t[:1], y, core=[y.mean()], dim=2)
    assert c([0.0, 30.0]) == pytest.approx(darwin_t_pvalue(), abs=1e-6)


def test_confidence_family_needs_common_core():
    y = fixture("darwin").y
    with pytest.raises(NormalizationError):
        im_from_confidence_family(_t_interval, lambda t: t[:1], y, core=[1000.0], dim=2)


def test_small_validity_run():
    t = validity_diagnostic(Normal(), [[0.0, 1.0]], [0.1, 0.5], reps=500, cfg=MonteCarloConfig(M=500, seed=4), n=10)
    assert t.all_pass
