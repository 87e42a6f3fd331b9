"""IMs that go beyond a parametric model: conformal prediction and risk minimizers.

The conformal transducer ranks a candidate next observation against the
leave-one-out scores of the augmented bag.  The risk IM validifies the excess
empirical risk by resampling the data, with the resample's own minimizer
standing in for the true one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import rng as _rng
from .errors import ConvergenceError, DimensionMismatchError
from .models import Dataset

__all__ = [
    "ConformityRanking",
    "mean_distance",
    "conformal_transducer",
    "conformal_region",
    "LossFunction",
    "empirical_risk_minimize",
    "RiskIM",
    "fit_risk_im",
    "risk_im_contour",
]


# -- conformal prediction ---------------------------------------------------

@dataclass(frozen=True)
class ConformityRanking:
    """``rho(bag, y)``: larger means ``y`` conforms better to ``bag``.

    ``rho`` must not depend on the order of the bag.
    """

    rho: Callable[[np.ndarray, np.ndarray], float]
    description: str = ""

    def __call__(self, bag, y) -> float:
        return float(self.rho(np.asarray(bag, dtype=float), np.asarray(y, dtype=float)))


def _exact_mean(bag: np.ndarray) -> np.ndarray:
    # fsum is correctly rounded, so the mean does not depend on the bag's order
    bag = np.asarray(bag, dtype=float)
    if bag.ndim == 1:
        return np.array(math.fsum(bag) / bag.shape[0])
    return np.array([math.fsum(col) for col in bag.T]) / bag.shape[0]


def mean_distance() -> ConformityRanking:
    """``rho(bag, y) = -|y - mean(bag)|`` (Euclidean norm for vector records)."""

    def rho(bag, y):
        return -float(np.linalg.norm(np.atleast_1d(y - _exact_mean(bag))))

    return ConformityRanking(rho, "negative distance to the bag mean")


def _records(z) -> np.ndarray:
    z = z.y if isinstance(z, Dataset) else z
    return np.asarray(z, dtype=float)


def conformal_transducer(z, candidate, rho: ConformityRanking | None = None) -> float:
    """Fraction of the ``n + 1`` leave-one-out scores that are ``<=`` the candidate's."""
    rho = rho or mean_distance()
    bag = _records(z)
    if bag.shape[0] < 1:
        raise ValueError("the transducer needs at least one observation")
    cand = np.asarray(candidate, dtype=float)
    if cand.shape != bag.shape[1:]:
        raise DimensionMismatchError(f"candidate shape {cand.shape} does not match records {bag.shape[1:]}")
    aug = np.concatenate([bag, cand[None]], axis=0)
    m = aug.shape[0]
    scores = np.array([rho(np.delete(aug, i, axis=0), aug[i]) for i in range(m)])
    return int(np.sum(scores <= scores[-1])) / m


def conformal_region(z, grid, alpha: float, rho: ConformityRanking | None = None) -> np.ndarray:
    """Grid candidates whose transducer value is at least ``alpha`` (possibly empty)."""
    grid = np.asarray(grid, dtype=float)
    bag = _records(z)
    pts = grid.reshape(-1, *bag.shape[1:]) if bag.ndim > 1 else grid.reshape(-1)
    vals = np.array([conformal_transducer(bag, c, rho) for c in pts])
    return pts[vals >= alpha]


# -- risk minimization ------------------------------------------------------

_KINDS = ("squared-error", "zero-one", "check")


@dataclass(frozen=True)
class LossFunction:
    """Loss ``l_theta(z)`` for location (``x`` absent) or simple linear prediction.

    The predictor is ``theta[0]`` without covariates and ``theta[0] + theta[1] x``
    with them.  ``zero-one`` classifies ``y`` in {0, 1} by ``1{theta[0] + theta[1] x > 0}``
    and charges 1 whenever the label differs from the classification.
    """

    kind: str
    u: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown loss kind '{self.kind}'; expected one of {_KINDS}")
        if self.kind == "check" and not (self.u is not None and 0.0 < self.u < 1.0):
            raise ValueError("check loss needs a quantile level u in (0, 1)")

    @classmethod
    def squared(cls) -> "LossFunction":
        return cls("squared-error")

    @classmethod
    def zero_one(cls) -> "LossFunction":
        return cls("zero-one")

    @classmethod
    def check(cls, u: float) -> "LossFunction":
        return cls("check", u)

    def predict(self, theta, x=None) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        if x is None:
            return t[..., 0:1]
        return t[..., 0:1] + t[..., 1:2] * np.asarray(x, dtype=float)

    def loss(self, theta, y, x=None) -> np.ndarray:
        """Per-record losses; a batch of thetas gives one row per theta."""
        y = np.asarray(y, dtype=float)
        f = self.predict(theta, x)
        if self.kind == "squared-error":
            out = (y - f) ** 2
        elif self.kind == "check":
            r = y - f
            out = r * (self.u - (r < 0))
        else:
            if x is None:
                raise DimensionMismatchError("zero-one loss needs covariates")
            out = (y != (f > 0)).astype(float)
        return out if np.ndim(theta) > 1 else out.reshape(-1)

    def risk(self, theta, y, x=None) -> np.ndarray | float:
        r = self.loss(theta, y, x).mean(axis=-1)
        return float(r) if np.ndim(r) == 0 else r

    def dim(self, x) -> int:
        return 1 if x is None else 2


def _in_box(theta, domain) -> bool:
    if domain is None:
        return True
    lo, hi = (np.asarray(b, dtype=float) for b in domain)
    return bool(np.all(theta >= lo - 1e-12) and np.all(theta <= hi + 1e-12))


def _erm_location(loss: LossFunction, y, domain):
    lo, hi = (-np.inf, np.inf) if domain is None else (float(domain[0][0]), float(domain[1][0]))
    if loss.kind == "squared-error":
        return np.array([min(max(float(np.mean(y)), lo), hi)])
    # check loss is piecewise linear with kinks at the data: scan them
    cand = np.unique(np.clip(y, lo, hi))
    risks = loss.risk(cand[:, None], y)
    best = np.flatnonzero(risks <= risks.min() + 1e-12 * max(1.0, abs(risks.min())))
    # a flat stretch between two kinks: report its midpoint
    return np.array([0.5 * (cand[best[0]] + cand[best[-1]])])


def _erm_linear(loss: LossFunction, y, x, domain):
    n = y.size
    X = np.column_stack([np.ones(n), x])
    if np.linalg.matrix_rank(X) < 2:
        raise ConvergenceError("covariate has no spread; the linear minimizer is not unique")
    bounds = (-np.inf, np.inf) if domain is None else domain
    if loss.kind == "squared-error":
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        if _in_box(beta, domain):
            return beta
        res = optimize.lsq_linear(X, y, bounds=bounds)
        if not res.success:
            raise ConvergenceError(res.message)
        return res.x
    # check loss as a linear program: min sum u e+ + (1-u) e-  s.t.  X b + e+ - e- = y
    u = loss.u
    c = np.concatenate([np.zeros(2), np.full(n, u), np.full(n, 1 - u)])
    A = np.hstack([X, np.eye(n), -np.eye(n)])
    lb = [(None if domain is None else domain[0][j], None if domain is None else domain[1][j]) for j in range(2)]
    res = optimize.linprog(c, A_eq=A, b_eq=y, bounds=lb + [(0, None)] * (2 * n), method="highs")
    if res.status != 0:
        raise ConvergenceError(f"check-loss linear program failed: {res.message}")
    return res.x[:2]


def _erm_zero_one(loss: LossFunction, y, x, domain):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatchError("zero-one minimizer supports a scalar covariate only")
    xs = np.unique(x)
    cuts = np.concatenate([[xs[0] - 1.0], 0.5 * (xs[1:] + xs[:-1]), [xs[-1] + 1.0]])
    # every distinct labelling of a 1-d threshold classifier, scaled to |slope| = 1
    cand = [np.array([-s * t, s]) for t in cuts for s in (1.0, -1.0)]
    cand += [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
    cand = [t for t in cand if _in_box(t, domain)]
    if not cand:
        raise ConvergenceError("no threshold classifier lies in the domain box")
    cand = np.array(cand)
    risks = loss.risk(cand, y, x)
    return cand[int(np.argmin(risks))]


def empirical_risk_minimize(z: Dataset, loss: LossFunction, domain=None) -> np.ndarray:
    """Minimizer of the empirical risk over ``theta`` (optionally in a box ``(lower, upper)``).

    Squared error is solved in closed form (bounded least squares when the box
    binds), check loss by scanning kinks (location) or as a linear program,
    and zero-one loss by enumerating every threshold classifier.
    """
    y = np.asarray(z.y, dtype=float)
    if z.x is None:
        if loss.kind == "zero-one":
            raise DimensionMismatchError("zero-one loss needs covariates")
        return _erm_location(loss, y, domain)
    if loss.kind == "zero-one":
        return _erm_zero_one(loss, y, z.x, domain)
    return _erm_linear(loss, y, np.asarray(z.x, dtype=float), domain)


@dataclass
class RiskIM:
    """Bootstrap-validified excess risk; call it to get the contour at ``theta``."""

    z: Dataset
    loss: LossFunction
    theta_hat: np.ndarray
    null: np.ndarray
    B: int
    seed: int
    redraws: int = 0
    domain: tuple | None = None
    notes: list[str] = field(default_factory=list)

    def ranking(self, theta) -> float:
        r = self.loss.risk(np.asarray(theta, dtype=float), self.z.y, self.z.x)
        r_hat = self.loss.risk(self.theta_hat, self.z.y, self.z.x)
        return -(r - r_hat)

    def __call__(self, theta) -> float:
        rho = self.ranking(theta)
        if rho >= 0.0:
            return 1.0
        return np.searchsorted(self.null, rho, side="right") / self.B


def _bootstrap_block(z, loss, theta_hat, domain, seed, b, size):
    g = _rng.stream(seed, 0xB007, b)
    n = z.n
    out, redraws = np.empty(size), 0
    k = 0
    while k < size:
        idx = g.integers(0, n, n)
        zb = Dataset(z.y[idx], None if z.x is None else np.asarray(z.x)[idx])
        try:
            tb = empirical_risk_minimize(zb, loss, domain)
        except ConvergenceError:
            redraws += 1
            if redraws > 10 * size + 100:
                raise ConvergenceError("resampled minimizers keep failing") from None
            continue
        excess = loss.risk(theta_hat, zb.y, zb.x) - loss.risk(tb, zb.y, zb.x)
        out[k] = -max(excess, 0.0)
        k += 1
    return out, redraws


def _bootstrap_squared_location(z, theta_hat, seed, b, size):
    g = _rng.stream(seed, 0xB007, b)
    Y = z.y[g.integers(0, z.n, (size, z.n))]
    # excess risk of theta_hat on a resample is (mean_b - theta_hat)^2
    return -((Y.mean(axis=1) - theta_hat[0]) ** 2), 0


def fit_risk_im(z: Dataset, loss: LossFunction, B: int = 1000, seed: int = 0, domain=None,
                parallel: bool = True) -> RiskIM:
    """Resample ``z`` ``B`` times and record ``-(r_b(theta_hat) - r_b(theta_hat_b))``."""
    if B < 500:
        raise ValueError("the risk IM needs B >= 500 bootstrap draws")
    z = Dataset(np.asarray(z.y, dtype=float), z.x)
    theta_hat = empirical_risk_minimize(z, loss, domain)
    fast = loss.kind == "squared-error" and z.x is None and domain is None

    def block(b, start, stop):
        if fast:
            return _bootstrap_squared_location(z, theta_hat, seed, b, stop - start)
        return _bootstrap_block(z, loss, theta_hat, domain, seed, b, stop - start)

    parts = _rng.map_blocks(block, B, parallel=parallel and not fast)
    null = np.sort(np.concatenate([p[0] for p in parts]))
    redraws = sum(p[1] for p in parts)
    im = RiskIM(z, loss, theta_hat, null, B, seed, redraws, domain)
    if redraws:
        im.notes.append(f"{redraws} resamples re-drawn after minimizer failure")
    return im


def risk_im_contour(z: Dataset, loss: LossFunction, theta, B: int = 1000, seed: int = 0, domain=None) -> float:
    return fit_risk_im(z, loss, B, seed, domain)(theta)
