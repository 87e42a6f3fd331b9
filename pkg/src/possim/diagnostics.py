"""False-confidence diagnostics.

The false confidence rate of a data-dependent distribution ``Q_z`` at a false
hypothesis ``H`` is the frequency with which ``Q_Z(H) > 1 - alpha`` when data
come from some ``theta`` outside ``H``.  Fixing one such ``theta`` gives a
lower bound on the supremum.  The same harness runs on an IM's lower
probability, for which the rate stays below ``alpha``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import rng as _rng
from .engine import MonteCarloConfig, _tie_bound, pivotal_null
from .errors import DomainError, SingularCovarianceError
from .models import Dataset, LinearRegression, Model
from .possibility import HypothesisSet

__all__ = [
    "PosteriorProcedure",
    "FCRCurve",
    "bayes_regression_posterior",
    "bayes_regression_procedure",
    "regression_root_hypothesis",
    "regression_root_complement",
    "RootNecessity",
    "fcr_estimate",
    "im_fcr_estimate",
    "regression_covariates",
]

FCR_ALPHAS = tuple(np.round(np.arange(0.1, 0.91, 0.1), 2))


@dataclass(frozen=True)
class PosteriorProcedure:
    """``sample_posterior(z, seed, draws)`` returning a ``(draws, dim)`` array."""

    sample_posterior: Callable[[Dataset, int, int], np.ndarray]
    label: str = ""

    def __call__(self, z: Dataset, seed: int, draws: int) -> np.ndarray:
        out = np.asarray(self.sample_posterior(z, seed, draws), dtype=float)
        if out.shape[0] != draws or not np.all(np.isfinite(out)):
            raise ValueError(f"posterior '{self.label}' returned malformed draws")
        return out


def bayes_regression_posterior(z: Dataset, draws: int = 5000, seed: int = 0) -> np.ndarray:
    """Draws of ``(beta0, beta1, sigma2)`` under the flat prior on ``(beta, log sigma)``.

    ``sigma2 | y ~ RSS / chi2_{n-2}`` and ``beta | sigma2, y ~ N(beta_hat, sigma2 (X'X)^{-1})``.
    """
    y = np.asarray(z.y, dtype=float)
    x = np.asarray(z.x, dtype=float)
    n = y.size
    if n <= 3:
        raise ValueError("the regression posterior needs n > 3")
    X = np.column_stack([np.ones(n), x])
    XtX = X.T @ X
    if np.linalg.matrix_rank(XtX) < 2:
        raise SingularCovarianceError("design matrix is singular")
    beta_hat = np.linalg.solve(XtX, X.T @ y)
    rss = float(np.sum((y - X @ beta_hat) ** 2))
    L = np.linalg.cholesky(np.linalg.inv(XtX))
    g = _rng.stream(seed, 0xBA7E5)
    s2 = rss / g.chisquare(n - 2, draws)
    beta = beta_hat + np.sqrt(s2)[:, None] * (g.standard_normal((draws, 2)) @ L.T)
    return np.column_stack([beta, s2])


def bayes_regression_procedure() -> PosteriorProcedure:
    return PosteriorProcedure(lambda z, seed, draws: bayes_regression_posterior(z, draws, seed),
                              "Bayes, flat prior on (beta, log sigma)")


def _root_statistic(theta, root: float):
    t = np.asarray(theta, dtype=float)
    b0, b1 = t[..., 0], t[..., 1]
    # -b0/b1 > root  <=>  (b0 + root*b1) * b1 < 0
    return (b0 + root * b1) * b1


def regression_root_hypothesis(root: float = -1.0) -> HypothesisSet:
    """``H = {-beta0/beta1 > root}``; membership works on single points and batches."""

    def contains(theta):
        s = _root_statistic(theta, root) < 0
        return bool(s) if np.ndim(s) == 0 else s

    return HypothesisSet(dim=3, contains=contains, description=f"-beta0/beta1 > {root:g}")


def _cone_generators(root: float) -> np.ndarray:
    # columns span {beta1 >= 0, beta0 + root*beta1 >= 0}
    return np.array([[1.0, -root], [0.0, 1.0]])


def regression_root_complement(root: float = -1.0, b_max: float = 50.0, log_s2=(-8.0, 6.0),
                               restarts: int = 8, seed: int = 0) -> list[HypothesisSet]:
    """The complement of :func:`regression_root_hypothesis` as two searchable cones.

    Each box ``(a, b, log sigma2)`` maps to ``+/-(a g1 + b g2, sigma2)``.
    """
    G = _cone_generators(root)
    out = []
    for sign in (1.0, -1.0):
        def transform(u, sign=sign):
            beta = sign * (G @ u[:2])
            return np.array([beta[0], beta[1], np.exp(u[2])])

        out.append(HypothesisSet.box([0.0, 0.0, log_s2[0]], [b_max, b_max, log_s2[1]], transform,
                                     restarts=restarts, seed=seed,
                                     description=f"-beta0/beta1 <= {root:g} ({'+' if sign > 0 else '-'} cone)"))
    return out


@dataclass
class RootNecessity:
    """IM lower probability of ``{-beta0/beta1 > root}`` in simple linear regression.

    The joint relative likelihood is pivotal, so the contour is a fixed
    increasing function of it and its supremum over the complement is reached
    where the relative likelihood is.  Maximizing over ``sigma2`` leaves a
    least-squares problem over two polyhedral cones, solved exactly by NNLS.
    """

    null: np.ndarray
    root: float = -1.0

    @classmethod
    def for_design(cls, x, cfg: MonteCarloConfig | None = None, root: float = -1.0) -> "RootNecessity":
        x = np.asarray(x, dtype=float)
        model = LinearRegression()
        z = Dataset(np.zeros(x.size), x)
        null = pivotal_null(model, z, cfg or MonteCarloConfig(M=20000, seed=0), reference=np.array([0.0, 0.0, 1.0]))
        return cls(null, root)

    def sup_log_rl(self, z: Dataset) -> float:
        y = np.asarray(z.y, dtype=float)
        X = np.column_stack([np.ones(y.size), np.asarray(z.x, dtype=float)])
        beta_hat, *_ = np.linalg.lstsq(X, y, rcond=None)
        rss_hat = float(np.sum((y - X @ beta_hat) ** 2))
        G = _cone_generators(self.root)
        best = np.inf
        for sign in (1.0, -1.0):
            _, resid = optimize.nnls(sign * X @ G, y)
            best = min(best, resid**2)
        if rss_hat <= 0:
            return 0.0 if best <= 0 else -np.inf
        return min(0.0, -0.5 * y.size * np.log(max(best, rss_hat) / rss_hat))

    def possibility_of_complement(self, z: Dataset) -> float:
        lr = self.sup_log_rl(z)
        if lr >= 0.0:
            return 1.0
        return np.searchsorted(self.null, _tie_bound(lr), side="right") / self.null.size

    def __call__(self, z: Dataset) -> float:
        return 1.0 - self.possibility_of_complement(z)


@dataclass
class FCRCurve:
    alphas: np.ndarray
    rates: np.ndarray
    reps: int
    label: str = ""
    seed: int = 0
    x: np.ndarray | None = None
    masses: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def se(self) -> np.ndarray:
        a = self.alphas
        return np.sqrt(a * (1 - a) / self.reps)

    @property
    def monotone(self) -> bool:
        order = np.argsort(self.alphas)
        return bool(np.all(np.diff(self.rates[order]) >= 0))

    def rows(self):
        return [(float(a), float(r)) for a, r in zip(self.alphas, self.rates)]


def regression_covariates(n: int, seed: int, low: float = -2.0, high: float = 2.0) -> np.ndarray:
    """Covariates drawn once from ``Unif(low, high)`` and then held fixed."""
    return _rng.stream(seed, 0xC0FA).uniform(low, high, n)


def _simulate_rep(model: Model, theta, n, x, seed, r) -> Dataset:
    g = _rng.stream(seed, 0xDA7A, r)
    return Dataset(model.simulate(np.asarray(theta, dtype=float), n, g, 1, x)[0], x)


def _mass(H: HypothesisSet, draws: np.ndarray) -> float:
    hits = H.contains(draws)
    if np.ndim(hits) == 0:
        hits = np.array([bool(H.contains(d)) for d in draws])
    return float(np.mean(hits))


def _check_truth(H: HypothesisSet, theta_true):
    if H.contains is None:
        raise ValueError("the hypothesis needs a membership predicate")
    if bool(np.all(H.contains(np.asarray(theta_true, dtype=float)))):
        raise DomainError("theta_true lies in H; a false confidence rate needs a false hypothesis")


def _scores_to_curve(scores, alphas, reps, label, seed, x) -> FCRCurve:
    alphas = np.asarray(alphas, dtype=float)
    rates = np.array([np.mean(scores > 1.0 - a) for a in alphas])
    return FCRCurve(alphas, rates, reps, label, seed, x, scores)


def fcr_estimate(
    procedure: PosteriorProcedure,
    H: HypothesisSet,
    theta_true,
    n: int,
    reps: int = 1000,
    alpha_grid: Sequence[float] = FCR_ALPHAS,
    seed: int = 0,
    draws: int = 5000,
    x=None,
    model: Model | None = None,
    parallel: bool = True,
) -> FCRCurve:
    """Fraction of simulated datasets whose posterior gives ``H`` mass above ``1 - alpha``."""
    if reps < 200:
        raise ValueError("fcr_estimate needs reps >= 200")
    _check_truth(H, theta_true)
    model = model or LinearRegression()
    if x is None and isinstance(model, LinearRegression):
        x = regression_covariates(n, seed)

    def block(b, start, stop):
        out = np.empty(stop - start)
        for k, r in enumerate(range(start, stop)):
            z = _simulate_rep(model, theta_true, n, x, seed, r)
            out[k] = _mass(H, procedure(z, _rng.stream(seed, 0x9057, r).integers(2**63), draws))
        return out

    masses = np.concatenate(_rng.map_blocks(block, reps, parallel=parallel, block=32))
    return _scores_to_curve(masses, alpha_grid, reps, procedure.label, seed, x)


def im_fcr_estimate(
    lower_probability: Callable[[Dataset], float],
    H: HypothesisSet,
    theta_true,
    n: int,
    reps: int = 1000,
    alpha_grid: Sequence[float] = FCR_ALPHAS,
    seed: int = 0,
    x=None,
    model: Model | None = None,
    parallel: bool = True,
    label: str = "possibilistic IM",
) -> FCRCurve:
    """Same harness with an IM lower probability in place of posterior mass.

    Datasets are simulated from the same substreams as :func:`fcr_estimate`,
    so the two curves are computed on identical data.
    """
    if reps < 200:
        raise ValueError("im_fcr_estimate needs reps >= 200")
    _check_truth(H, theta_true)
    model = model or LinearRegression()
    if x is None and isinstance(model, LinearRegression):
        x = regression_covariates(n, seed)

    def block(b, start, stop):
        return np.array([lower_probability(_simulate_rep(model, theta_true, n, x, seed, r))
                         for r in range(start, stop)])

    scores = np.concatenate(_rng.map_blocks(block, reps, parallel=parallel, block=32))
    return _scores_to_curve(scores, alpha_grid, reps, label, seed, x)
