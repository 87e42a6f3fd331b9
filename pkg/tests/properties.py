"""Exact property checks shared by the hypothesis suite and the acceptance run.

Each check takes a seed, builds its own random instance and returns True or
raises AssertionError.  No tolerances: comparisons are exact.
"""

import warnings

import numpy as np

from possim import (
    Dataset,
    GaussianPossibilityParams,
    HypothesisSet,
    MonteCarloConfig,
    confidence_region,
    conformal_transducer,
    contour_mc,
    likelihood_contour,
    make_model,
    mle,
    necessity_of,
    possibility_of,
    prob_to_poss,
)


def _gaussian(g, d):
    A = g.standard_normal((d, d))
    return GaussianPossibilityParams(g.standard_normal(d), A @ A.T + 0.5 * np.eye(d))


def _normal_data(g, n=12):
    return Dataset(g.normal(g.uniform(-3, 3), g.uniform(0.5, 3), n))


def _cfg(M, seed, parallel=True):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return MonteCarloConfig(M=M, seed=seed, parallel=parallel)


def maxitivity(seed: int) -> bool:
    g = np.random.default_rng(seed)
    d = int(g.integers(1, 4))
    contour = _gaussian(g, d).contour()
    grid = g.normal(0, 2, (40, d))
    mask = g.random(40) < 0.5
    mask[0], mask[1] = True, False
    A, B = HypothesisSet.grid(grid[mask]), HypothesisSet.grid(grid[~mask])
    union = HypothesisSet.grid(grid)
    assert possibility_of(contour, union) == max(possibility_of(contour, A), possibility_of(contour, B))
    # monotonicity along with maxitivity
    assert possibility_of(contour, A) <= possibility_of(contour, union)
    return True


def nesting(seed: int) -> bool:
    g = np.random.default_rng(seed)
    z = _normal_data(g)
    that, _ = mle(make_model("normal"), z)
    C = likelihood_contour(make_model("normal"), z, "pivotal", _cfg(1000, seed))
    mu = that[0] + np.linspace(-3, 3, 15) * that[1]
    sg = that[1] * np.exp(np.linspace(-1, 1, 11))
    grid = np.array([(m, s) for m in mu for s in sg] + [tuple(that)])
    region = confidence_region(C, 0.0, grid)
    a, b = np.sort(g.random(2))
    small, big = region.at(b).mask, region.at(a).mask
    assert np.all(big[small])
    return True


def unit_interval(seed: int) -> bool:
    g = np.random.default_rng(seed)
    z = _normal_data(g, 8)
    m = make_model("normal")
    C = likelihood_contour(m, z, "pivotal", _cfg(500, seed))
    pts = np.column_stack([g.normal(0, 10, 50), np.exp(g.normal(0, 2, 50))])
    vals = C.many(pts)
    assert np.all((vals >= 0.0) & (vals <= 1.0))
    v = contour_mc(m, z, pts[0], _cfg(200, seed))
    assert 0.0 <= v <= 1.0
    return True


def mle_plausibility(seed: int) -> bool:
    g = np.random.default_rng(seed)
    for name, y in [("normal", g.normal(1, 2, 10)), ("gamma", g.gamma(2.0, 3.0, 15))]:
        m = make_model(name)
        z = Dataset(y)
        that, _ = mle(m, z)
        assert contour_mc(m, z, that, _cfg(200, seed)) == 1.0
        assert likelihood_contour(m, z, "pivotal" if name == "normal" else "wilks", _cfg(200, seed))(that) == 1.0
    return True


def necessity_le_possibility(seed: int) -> bool:
    g = np.random.default_rng(seed)
    d = int(g.integers(1, 4))
    p = _gaussian(g, d)
    contour = p.contour()
    grid = np.vstack([p.mean, g.normal(0, 2, (30, d))])
    mask = g.random(31) < 0.5
    H, Hc = HypothesisSet.grid(grid[mask]) if mask.any() else HypothesisSet.empty(d), \
        HypothesisSet.grid(grid[~mask]) if (~mask).any() else HypothesisSet.empty(d)
    nec = necessity_of(contour, H, Hc)
    if mask.any():
        assert nec <= possibility_of(contour, H)
    assert nec == 1.0 - (possibility_of(contour, Hc) if (~mask).any() else 0.0)
    return True


def seed_determinism(seed: int) -> bool:
    g = np.random.default_rng(seed)
    p = _gaussian(g, 2)
    y = g.normal(size=2)
    dens = lambda t: -p.mahalanobis2(t)
    samp = lambda gen, k: gen.multivariate_normal(p.mean, p.covariance, k)
    a = prob_to_poss(dens, samp, y, 3000, seed, parallel=True)
    b = prob_to_poss(dens, samp, y, 3000, seed, parallel=False)
    assert a == b
    m = make_model("normal")
    z = _normal_data(g)
    th = np.array([z.y.mean() + 0.3, z.y.std() + 0.1])
    assert contour_mc(m, z, th, _cfg(1500, seed, True)) == contour_mc(m, z, th, _cfg(1500, seed, False))
    return True


def transducer_permutation(seed: int) -> bool:
    g = np.random.default_rng(seed)
    y = g.normal(size=int(g.integers(2, 15)))
    cand = float(g.normal())
    base = conformal_transducer(y, cand)
    for _ in range(5):
        assert conformal_transducer(g.permutation(y), cand) == base
    return True


ALL = {
    "maxitivity": maxitivity,
    "level-set nesting": nesting,
    "contour in [0,1]": unit_interval,
    "contour(MLE)=1": mle_plausibility,
    "necessity <= possibility": necessity_le_possibility,
    "seed determinism": seed_determinism,
    "transducer permutation invariance": transducer_permutation,
}
