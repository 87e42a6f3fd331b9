import numpy as np
import pytest

from possim.errors import BoundaryMLEError, DomainError, FixtureMismatchError
from possim.models import (
    AGRESTI_BLOCKS,
    Dataset,
    Gamma,
    LinearRegression,
    LogisticBinomial,
    Multinomial,
    Normal,
    NormalKnownSigma,
    builtin_models,
    check_fixture,
    fixture,
    make_model,
    mle,
    read_dataset,
    relative_likelihood,
)

from oracles import AGRESTI, DARWIN, normal_mle


def test_registry_has_the_five_families():
    ids = set(builtin_models())
    assert {"normal", "gamma", "logistic_binomial", "multinomial", "linear_regression"} <= ids


def test_darwin_fixture_and_mle():
    z = fixture("darwin")
    np.testing.assert_array_equal(z.y, DARWIN)
    that, rep = mle(Normal(), z)
    np.testing.assert_allclose(that, normal_mle(DARWIN), rtol=1e-12)
    assert abs(that[0] - 20.93) < 0.01 and abs(that[1] - 36.46) < 0.01
    assert rep.converged


def test_orings_fifty_percent_temperature():
    z = fixture("orings")
    that, rep = mle(LogisticBinomial(6), z)
    assert rep.converged
    assert -that[0] / that[1] == pytest.approx(53.94, abs=0.05)
    check_fixture("orings", z)


def test_multinomial_mle_is_exact_proportion():
    z = fixture("multinomial_agresti")
    that, _ = mle(Multinomial(9), z)
    np.testing.assert_array_equal(that, AGRESTI / 160)
    assert len(AGRESTI_BLOCKS) == 3


def test_gamma_consistency():
    g = Gamma()
    y = g.simulate(np.array([2.0, 3.0]), 10_000, np.random.default_rng(11), 1)[0]
    that, _ = mle(g, Dataset(y))
    np.testing.assert_allclose(that, [2.0, 3.0], rtol=0.05)


def test_gamma_score_vanishes_at_mle():
    g = Gamma()
    y = g.simulate(np.array([1.5, 2.0]), 50, np.random.default_rng(2), 1)[0]
    that, _ = mle(g, Dataset(y))
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h * that[j]
        grad = (g.loglik(that + e, y) - g.loglik(that - e, y)) / (2 * e[j])
        assert abs(grad) < 1e-4


def test_relative_likelihood_bounds():
    z = fixture("darwin")
    that, _ = mle(Normal(), z)
    assert relative_likelihood(Normal(), z, that) == pytest.approx(1.0)
    assert 0 < relative_likelihood(Normal(), z, [0.0, 40.0]) < 1


def test_normal_closed_form_relative_likelihood():
    z = fixture("darwin")
    m = Normal()
    th = np.array([5.0, 30.0])
    assert m.relative_likelihood_closed_form(th, z.y) == pytest.approx(relative_likelihood(m, z, th), rel=1e-10)


def test_degenerate_normal_sample_is_boundary():
    with pytest.raises(BoundaryMLEError):
        mle(Normal(), Dataset(np.ones(5)))


def test_separable_logistic_data_is_boundary():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([0.0, 0.0, 6.0, 6.0])
    with pytest.raises(BoundaryMLEError):
        mle(LogisticBinomial(6), Dataset(y, x))


@pytest.mark.parametrize("model,theta,x", [
    (Normal(), [1.0, 2.0], None),
    (Gamma(), [2.0, 3.0], None),
    (LinearRegression(), [0.3, 0.1, 1.0], np.linspace(-2, 2, 25)),
    (LogisticBinomial(6), [1.0, -0.5], np.linspace(-2, 2, 25)),
])
def test_analytic_information_matches_numeric(model, theta, x):
    theta = np.asarray(theta)
    y = model.simulate(theta, 25, np.random.default_rng(4), 1, x)[0]
    that, _ = mle(model, Dataset(y, x))
    J = model.obs_information(y, x, that)
    Jn = type(model).__mro__[-2].obs_information(model, y, x, that)
    np.testing.assert_allclose(J, Jn, rtol=1e-3, atol=1e-6)


def test_domain_checks():
    with pytest.raises(DomainError):
        Normal().check_domain([0.0, -1.0])
    assert not Multinomial(3).in_domain([0.5, 0.6, -0.1])


def test_make_model_hyperparameters():
    assert make_model("logistic_binomial", trials=4).trials == 4
    assert make_model("normal_known_sigma", sigma=2.0).sigma == 2.0
    with pytest.raises(ValueError):
        make_model("cauchy")


def test_read_dataset_two_columns(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("# comment\nx,y\n1,2\n3,4\n")
    z = read_dataset(p)
    np.testing.assert_array_equal(z.x, [1, 3])
    np.testing.assert_array_equal(z.y, [2, 4])


def test_fixture_mismatch_detected():
    z = Dataset(DARWIN + 1.0)
    with pytest.raises(FixtureMismatchError):
        check_fixture("darwin", z)


def test_known_sigma_model():
    m = NormalKnownSigma(sigma=1.0)
    that, _ = mle(m, Dataset(np.array([1.0, 2.0, 3.0])))
    assert that[0] == pytest.approx(2.0)
