import numpy as np
import pytest

from possim.credal import (
    EllipsoidApprox,
    calibrate_ellipsoid,
    contour_from_samples,
    sample_contour,
    sample_inner_approx,
)
from possim.engine import MonteCarloConfig, likelihood_contour
from possim.errors import MultimodalContourError
from possim.marginal import gamma_mean, profile_contour, profile_relative_likelihood
from possim.models import Dataset, Gamma, Normal, NormalKnownSigma, fixture, mle
from possim.possibility import GaussianPossibilityParams, PossibilityContour, credal_membership, gaussian_contour


def _std_gauss(d=2):
    return GaussianPossibilityParams(np.zeros(d), np.eye(d))


def test_calibrated_radius_for_standard_gaussian():
    P = _std_gauss()
    E = calibrate_ellipsoid(P.contour(), None, None, center=np.zeros(2), shape=np.eye(2))
    assert E.radius(0.05) == pytest.approx(np.sqrt(5.9915) * 1.1, rel=0.02)
    assert E.radius(1.0) == 0.0


def test_radius_is_non_increasing():
    E = calibrate_ellipsoid(_std_gauss().contour(), None, None, center=np.zeros(2), shape=np.eye(2))
    a = np.linspace(0.001, 1.0, 500)
    assert np.all(np.diff(E.radius(a)) <= 1e-12)


def test_enclosure_of_level_sets():
    P = GaussianPossibilityParams(np.array([1.0, -1.0]), np.array([[2.0, 0.6], [0.6, 1.0]]))
    E = calibrate_ellipsoid(P.contour(), None, None, center=P.mean, shape=P.covariance)
    pts = P.mean + np.random.default_rng(0).uniform(-6, 6, (1000, 2))
    vals = gaussian_contour(P, pts)
    for a in (0.05, 0.2, 0.5, 0.8):
        inside = E.inside(pts[vals >= a], a)
        assert inside.all()


def test_bimodal_contour_rejected():
    def bimodal(t):
        t = np.asarray(t)
        return float(max(np.exp(-np.sum((t - 3) ** 2)), np.exp(-np.sum(t**2))))

    with pytest.raises(MultimodalContourError):
        calibrate_ellipsoid(PossibilityContour(bimodal, 2), None, None, center=np.zeros(2), shape=np.eye(2),
                            probes_per_alpha=8)


def test_exact_level_masses():
    P = _std_gauss()
    S = sample_inner_approx(EllipsoidApprox.gaussian(P), 10_000, seed=3)
    g = gaussian_contour(P, S.points)
    for a in np.linspace(0.05, 0.95, 17):
        assert abs(np.mean(g >= a) - (1 - a)) <= 3 * np.sqrt(a * (1 - a) / 10_000)


def test_samples_are_credal_members():
    P = _std_gauss(3)
    S = sample_inner_approx(EllipsoidApprox.gaussian(P), 5000, seed=1)
    assert credal_membership(S.points, P.contour(), np.arange(0.1, 1.0, 0.1)).accepted


def test_degenerate_radius_puts_all_draws_at_center():
    E = EllipsoidApprox(np.array([1.0, 2.0]), np.eye(2), lambda a: np.zeros_like(np.asarray(a, float)))
    S = sample_inner_approx(E, 100, seed=0)
    np.testing.assert_array_equal(S.points, np.tile([1.0, 2.0], (100, 1)))


def test_sphere_directions_are_uniform():
    S = sample_inner_approx(EllipsoidApprox.gaussian(_std_gauss(3)), 20_000, seed=2)
    u = S.free_points / np.linalg.norm(S.free_points, axis=1, keepdims=True)
    assert np.linalg.norm(u.mean(axis=0)) <= 3 / np.sqrt(20_000)


def test_sampling_is_deterministic_and_thread_independent():
    E = EllipsoidApprox.gaussian(_std_gauss())
    a = sample_inner_approx(E, 3000, seed=7, parallel=True)
    b = sample_inner_approx(E, 3000, seed=7, parallel=False)
    np.testing.assert_array_equal(a.points, b.points)
    np.testing.assert_array_equal(a.levels, b.levels)


def test_levels_in_unit_interval():
    S = sample_inner_approx(EllipsoidApprox.gaussian(_std_gauss()), 1000, seed=0)
    assert np.all((S.levels > 0) & (S.levels < 1))


def test_contour_from_samples_endpoints():
    m = Normal()
    z = fixture("darwin")
    C = likelihood_contour(m, z, "pivotal", MonteCarloConfig(M=5000))
    E = calibrate_ellipsoid(C, m, z, probes_per_alpha=4)
    S = sample_inner_approx(E, 2000, seed=0)
    that, _ = mle(m, z)
    assert contour_from_samples(S, C.ranking, that) == 1.0
    assert contour_from_samples(S, C.ranking, [500.0, 1.0]) == 0.0


def test_known_sigma_reconstruction_matches_direct_contour():
    m = NormalKnownSigma(1.0)
    y = m.simulate(np.array([0.3]), 10, np.random.default_rng(1), 1)[0]
    z = Dataset(y)
    C = likelihood_contour(m, z, "pivotal", MonteCarloConfig(M=20_000))
    E = calibrate_ellipsoid(C, m, z, inflation=1.0, probes_per_alpha=2)
    S = sample_inner_approx(E, 10_000, seed=4)
    sc = sample_contour(S, C.ranking)
    grid = y.mean() + np.linspace(-1.2, 1.2, 25)
    assert max(abs(sc([g]) - C([g])) for g in grid) <= 0.02


@pytest.mark.slow
def test_gamma_mean_from_samples_matches_direct_profile():
    g = Gamma()
    y = g.simulate(np.array([2.0, 3.0]), 20, np.random.default_rng(5), 1)[0]
    z = Dataset(y)
    joint = likelihood_contour(g, z, "mc", MonteCarloConfig(M=1000, seed=2))
    E = calibrate_ellipsoid(joint, g, z, inflation=1.0)
    f = gamma_mean()
    S = sample_inner_approx(E, 5000, seed=1).project(f)

    def rank(p):
        return float(np.log(max(profile_relative_likelihood(g, z, f, p), 1e-300)))

    sc = sample_contour(S, rank)
    that, _ = mle(g, z)
    phis = that[0] * that[1] * np.linspace(0.5, 1.8, 27)
    cfg = MonteCarloConfig(M=2000, seed=3)
    diffs = []
    for p in phis:
        v = profile_contour(g, z, f, p, cfg)
        if v >= 0.1:
            diffs.append(abs(sc([p]) - v))
    assert len(diffs) >= 5
    assert max(diffs) <= 0.05


def test_non_pivotal_reconstruction_is_flagged():
    g = Gamma()
    z = Dataset(g.simulate(np.array([2.0, 3.0]), 30, np.random.default_rng(0), 1)[0])
    E = calibrate_ellipsoid(likelihood_contour(g, z, "wilks"), g, z, probes_per_alpha=4)
    assert E.notes and sample_inner_approx(E, 10, seed=0).notes == E.notes
    zn = fixture("darwin")
    En = calibrate_ellipsoid(likelihood_contour(Normal(), zn, "wilks"), Normal(), zn, probes_per_alpha=4)
    assert not En.notes
