import numpy as np
import pytest

from possim.models import Dataset
from possim.predict import (
    ConformityRanking,
    LossFunction,
    conformal_region,
    conformal_transducer,
    empirical_risk_minimize,
    fit_risk_im,
    mean_distance,
    risk_im_contour,
)

from oracles import transducer_by_permutation


def test_transducer_worked_example():
    assert conformal_transducer([1.0, 2.0, 3.0], 100.0) == 0.25


def test_all_equal_bag_gives_one():
    assert conformal_transducer([5.0, 5.0, 5.0], 5.0) == 1.0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_transducer_equals_permutation_oracle(n):
    rng = np.random.default_rng(n)
    rho = mean_distance()
    for _ in range(5):
        bag = rng.standard_normal(n)
        cand = rng.standard_normal() * 2
        assert conformal_transducer(bag, cand, rho) == transducer_by_permutation(bag, cand, rho)


def test_transducer_values_on_lattice_and_permutation_invariant():
    rng = np.random.default_rng(0)
    bag = rng.standard_normal(7)
    v = conformal_transducer(bag, 0.3)
    assert (v * 8) == pytest.approx(round(v * 8))
    assert conformal_transducer(bag[::-1], 0.3) == v


def test_mean_distance_is_order_invariant():
    rho = mean_distance()
    bag = np.array([0.1, 1e16, -1e16, 0.3])
    assert rho(bag, 0.0) == rho(bag[[3, 1, 0, 2]], 0.0)


def test_vector_records():
    rng = np.random.default_rng(1)
    bag = rng.standard_normal((6, 2))
    v = conformal_transducer(bag, np.array([10.0, 10.0]))
    assert v == pytest.approx(1 / 7)


def test_region_small_alpha_is_whole_grid():
    grid = np.linspace(-3, 3, 31)
    bag = np.random.default_rng(2).standard_normal(9)
    assert conformal_region(bag, grid, 0.1).size == grid.size


def test_singleton_bag_region():
    grid = np.linspace(-3, 3, 13)
    assert conformal_region([0.0], grid, 0.5).size == grid.size


def test_region_nesting():
    grid = np.linspace(-3, 3, 61)
    bag = np.random.default_rng(3).standard_normal(15)
    r1 = set(conformal_region(bag, grid, 0.1))
    r2 = set(conformal_region(bag, grid, 0.3))
    assert r2 <= r1


@pytest.mark.slow
def test_conformal_coverage_n99():
    rng = np.random.default_rng(5)
    hits = 0
    for _ in range(1000):
        y = rng.standard_normal(100)
        hits += conformal_transducer(y[:99], y[99]) >= 0.1
    assert hits / 1000 >= 0.90 - 0.03


def test_erm_squared_location_is_mean():
    y = np.random.default_rng(0).standard_normal(30)
    assert empirical_risk_minimize(Dataset(y), LossFunction.squared())[0] == pytest.approx(y.mean())


@pytest.mark.parametrize("n", [20, 21])
def test_erm_check_half_is_median(n):
    y = np.random.default_rng(n).standard_normal(n)
    assert abs(empirical_risk_minimize(Dataset(y), LossFunction.check(0.5))[0] - np.median(y)) <= 1e-6


def test_erm_zero_one_separable():
    x = np.linspace(-1, 1, 12)
    y = (x > 0.2).astype(float)
    t = empirical_risk_minimize(Dataset(y, x), LossFunction.zero_one())
    assert LossFunction.zero_one().risk(t, y, x) == 0.0


def test_erm_linear_check_loss_beats_perturbations():
    rng = np.random.default_rng(4)
    x = rng.uniform(-2, 2, 40)
    y = 1 + 2 * x + rng.standard_t(3, 40)
    loss = LossFunction.check(0.3)
    t = empirical_risk_minimize(Dataset(y, x), loss)
    r = loss.risk(t, y, x)
    for d in rng.normal(scale=0.05, size=(50, 2)):
        assert loss.risk(t + d, y, x) >= r - 1e-12


def test_erm_respects_domain_box():
    y = np.random.default_rng(0).standard_normal(30) + 5
    t = empirical_risk_minimize(Dataset(y), LossFunction.squared(), domain=([-1.0], [1.0]))
    assert t[0] == 1.0


def test_loss_validation():
    with pytest.raises(ValueError):
        LossFunction("hinge")
    with pytest.raises(ValueError):
        LossFunction.check(1.5)


def test_risk_im_at_minimizer_is_one_and_reproducible():
    y = np.random.default_rng(0).standard_normal(40)
    z = Dataset(y)
    im = fit_risk_im(z, LossFunction.squared(), B=500, seed=3)
    assert im(im.theta_hat) == 1.0
    assert risk_im_contour(z, LossFunction.squared(), [0.2], B=500, seed=3) == im([0.2])


def test_risk_im_monotone_in_distance():
    y = np.random.default_rng(1).standard_normal(40)
    im = fit_risk_im(Dataset(y), LossFunction.squared(), B=1000, seed=0)
    d = np.linspace(0, 1, 21)
    up = [im(im.theta_hat + t) for t in d]
    down = [im(im.theta_hat - t) for t in d]
    assert np.all(np.diff(up) <= 0) and np.all(np.diff(down) <= 0)


def test_risk_im_requires_enough_resamples():
    with pytest.raises(ValueError):
        fit_risk_im(Dataset(np.ones(5)), LossFunction.squared(), B=100)


def test_risk_im_regression_pairs():
    rng = np.random.default_rng(2)
    x = rng.uniform(-2, 2, 30)
    y = 1 + 2 * x + rng.standard_normal(30)
    im = fit_risk_im(Dataset(y, x), LossFunction.check(0.5), B=500, seed=1)
    assert im(im.theta_hat) == 1.0
    assert im([1.0, 2.0]) > im([0.0, 2.0])


@pytest.mark.slow
def test_risk_im_validity_location():
    rng = np.random.default_rng(7)
    hits = 0
    for r in range(500):
        y = rng.standard_normal(50)
        hits += fit_risk_im(Dataset(y), LossFunction.squared(), B=1000, seed=r)([0.0]) <= 0.1
    assert hits / 500 <= 0.15
