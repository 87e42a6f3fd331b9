"""Validification: turning a ranking into a calibrated possibility contour.

The contour at ``theta`` is the probability, under ``P_theta``, that a fresh
dataset ranks ``theta`` no better than the observed one does.  It is estimated
by Monte Carlo (:func:`contour_mc`) or by the chi-square approximation
(:func:`contour_wilks`).  Level sets give confidence regions and the maxitive
measure gives tests.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .errors import ConvergenceError, DomainError, NestingError, NormalizationError
from .models import Dataset, Model, mle
from .possibility import HypothesisSet, PossibilityContour, chi2_sf, possibility_of

log = logging.getLogger(__name__)

__all__ = [
    "MonteCarloConfig",
    "MCResult",
    "ConfidenceRegion",
    "TestResult",
    "ValidityTable",
    "contour_mc",
    "contour_mc_detail",
    "contour_wilks",
    "likelihood_contour",
    "pivotal_null",
    "confidence_region",
    "test_hypothesis",
    "im_from_test_family",
    "im_from_confidence_family",
    "validity_diagnostic",
]

TIE_RTOL = 1e-10
MAX_REDRAW_FRACTION = 0.01


@dataclass(frozen=True)
class MonteCarloConfig:
    M: int = 1000
    seed: int = 0
    parallel: bool = True

    def __post_init__(self):
        if self.M < 100:
            raise ValueError(f"M={self.M} is too small for a calibrated contour (need >= 100)")
        if self.M < 1000:
            warnings.warn(f"M={self.M} < 1000: contour Monte Carlo error is large", stacklevel=3)

    def child(self, *key: int) -> "MonteCarloConfig":
        """Config with a seed derived from this one and ``key``."""
        seed = int(_rng.stream(self.seed, *key).integers(0, 2**63 - 1))
        return replace(self, seed=seed)


@dataclass
class MCResult:
    value: float
    M: int
    redraws: int = 0
    atom_mass: float = 0.0

    @property
    def se(self) -> float:
        return float(np.sqrt(max(self.value * (1 - self.value), 1e-300) / self.M))


def _tie_bound(lr_obs: float) -> float:
    return lr_obs + TIE_RTOL * max(1.0, abs(lr_obs))


def _observed_log_rl(model: Model, z: Dataset, theta) -> float:
    theta = model.check_domain(theta)
    lr, ok = model.log_rl(theta, z.y, z.x)
    if not bool(ok):
        mle(model, z)  # raises with a specific message
        raise ConvergenceError("MLE for the observed data did not converge")
    return float(lr)


def contour_mc_detail(model: Model, z: Dataset, theta, cfg: MonteCarloConfig) -> MCResult:
    """Monte Carlo contour with replicate bookkeeping.

    Replicates whose MLE fails are re-drawn from the same substream; more than
    1% re-draws is treated as a numerical failure.
    """
    theta = np.asarray(theta, dtype=float)
    lr_obs = _observed_log_rl(model, z, theta)
    if lr_obs == -np.inf:
        return MCResult(0.0, cfg.M)
    if lr_obs >= 0.0:
        return MCResult(1.0, cfg.M)
    bound = _tie_bound(lr_obs)
    size = model.size_of(z.y)

    def block(b, start, stop):
        g = _rng.stream(cfg.seed, b)
        need = stop - start
        lr, ok = model.log_rl(theta, model.simulate(theta, size, g, need, z.x), z.x)
        redraws = 0
        for _ in range(20):
            bad = np.flatnonzero(~ok)
            if bad.size == 0:
                break
            redraws += bad.size
            lr_new, ok_new = model.log_rl(theta, model.simulate(theta, size, g, bad.size, z.x), z.x)
            lr[bad], ok[bad] = lr_new, ok_new
        if not ok.all():
            raise ConvergenceError("replicate MLEs keep failing at this parameter value")
        below = lr <= bound
        ties = np.abs(lr - lr_obs) <= TIE_RTOL * max(1.0, abs(lr_obs))
        return int(below.sum()), int(ties.sum()), redraws

    parts = _rng.map_blocks(block, cfg.M, parallel=cfg.parallel)
    count = sum(p[0] for p in parts)
    ties = sum(p[1] for p in parts)
    redraws = sum(p[2] for p in parts)
    if redraws > MAX_REDRAW_FRACTION * cfg.M:
        raise ConvergenceError(f"{redraws} of {cfg.M} replicates needed re-drawing (> 1%)")
    if redraws:
        log.info("contour_mc: %d replicate(s) re-drawn after MLE failure", redraws)
    return MCResult(count / cfg.M, cfg.M, redraws, ties / cfg.M)


def contour_mc(model: Model, z: Dataset, theta, cfg: MonteCarloConfig) -> float:
    """Monte Carlo estimate of ``P_theta{R(Z, theta) <= R(z, theta)}``."""
    return contour_mc_detail(model, z, theta, cfg).value


def contour_wilks(model: Model, z: Dataset, theta) -> float:
    """Chi-square approximation ``1 - F_d(-2 log R(z, theta))``."""
    lr = _observed_log_rl(model, z, theta)
    if lr == -np.inf:
        return 0.0
    return float(chi2_sf(-2.0 * lr, model.n_free))


def pivotal_null(model: Model, z: Dataset, cfg: MonteCarloConfig, reference=None) -> np.ndarray:
    """Sorted draws of ``log R(Z, theta)`` for a model whose ranking is pivotal.

    Because the law of ``R(Z, theta)`` under ``P_theta`` does not depend on
    ``theta``, one set of draws serves every parameter value.
    """
    if not model.pivotal:
        raise ValueError(f"{model.name} does not declare a pivotal relative likelihood")
    if reference is None:
        reference, _ = mle(model, z)
    reference = model.check_domain(reference)
    size = model.size_of(z.y)

    def block(b, start, stop):
        g = _rng.stream(cfg.seed, b)
        lr, _ = model.log_rl(reference, model.simulate(reference, size, g, stop - start, z.x), z.x)
        return lr

    return np.sort(np.concatenate(_rng.map_blocks(block, cfg.M, parallel=cfg.parallel)))


def likelihood_contour(
    model: Model,
    z: Dataset,
    method: str = "mc",
    cfg: MonteCarloConfig | None = None,
) -> PossibilityContour:
    """The relative-likelihood contour for ``z`` as a :class:`PossibilityContour`.

    ``method`` is ``"mc"`` (fresh Monte Carlo at each point, common seed),
    ``"pivotal"`` (one cached null sample; pivotal models only) or ``"wilks"``.
    """
    that, _ = mle(model, z)

    def ranking(theta):
        if not model.in_domain(theta):
            return -np.inf
        lr, _ = model.log_rl(np.asarray(theta, dtype=float), z.y, z.x)
        return float(lr)

    if method == "wilks":
        def evaluate(theta):
            return contour_wilks(model, z, theta) if model.in_domain(theta) else 0.0
    elif method == "mc":
        cfg = cfg or MonteCarloConfig()

        def evaluate(theta):
            return contour_mc(model, z, theta, cfg) if model.in_domain(theta) else 0.0
    elif method == "pivotal":
        null = pivotal_null(model, z, cfg or MonteCarloConfig())

        def evaluate(theta):
            lr = ranking(theta)
            if lr >= 0.0:
                return 1.0
            return np.searchsorted(null, _tie_bound(lr), side="right") / null.size
    else:
        raise ValueError(f"unknown contour method '{method}'")
    return PossibilityContour(evaluate, model.dim, normalizer_hint=that, ranking=ranking,
                              label=f"{model.name}:{method}")


@dataclass
class ConfidenceRegion:
    """Upper level set ``{theta: contour(theta) >= alpha}``."""

    alpha: float
    contour: PossibilityContour
    grid: np.ndarray
    values: np.ndarray

    def member(self, theta) -> bool:
        return self.contour(theta) >= self.alpha

    @property
    def grid_members(self) -> np.ndarray:
        return self.grid[self.values >= self.alpha]

    @property
    def mask(self) -> np.ndarray:
        return self.values >= self.alpha

    def at(self, alpha: float) -> "ConfidenceRegion":
        """Same grid evaluation, different level (no re-evaluation)."""
        return ConfidenceRegion(alpha, self.contour, self.grid, self.values)


def confidence_region(
    contour: PossibilityContour,
    alpha: float,
    grid,
    center=None,
    values=None,
) -> ConfidenceRegion:
    """Level-``alpha`` confidence region of ``contour`` on ``grid``.

    ``center`` (default: the contour's normalizer, typically the MLE) must lie
    inside the grid's bounding box.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    pts = np.asarray(grid, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    center = contour.normalizer_hint if center is None else np.atleast_1d(np.asarray(center, dtype=float))
    if center is not None:
        c = np.atleast_1d(center)
        if np.any(c < pts.min(axis=0)) or np.any(c > pts.max(axis=0)):
            raise DomainError(f"grid does not cover the MLE {c}; extend the grid")
    vals = contour.many(pts) if values is None else np.asarray(values, dtype=float)
    return ConfidenceRegion(float(alpha), contour, pts, vals)


@dataclass
class TestResult:
    reject: bool
    plausibility: float
    alpha: float


def test_hypothesis(contour: PossibilityContour, H: HypothesisSet, alpha: float) -> TestResult:
    """Reject ``H`` iff its upper probability is at most ``alpha``."""
    pl = possibility_of(contour, H)
    return TestResult(pl <= alpha, pl, alpha)


test_hypothesis.__test__ = False  # not a pytest test


_BISECT_TOL = 1e-6
_PROBES = np.linspace(0.0, 1.0, 101)


def _sup_level(pred: Callable[[float], bool]) -> float:
    """``sup{beta in [0,1]: pred(beta)}`` for ``pred`` true on an initial segment."""
    if pred(1.0):
        return 1.0
    if not pred(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > 0.1 * _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def im_from_test_family(
    rejection: Callable[[float], Callable[[object], bool]],
    H0: HypothesisSet,
    z,
) -> PossibilityContour:
    """Possibilistic IM reproducing a nested family of tests of ``H0``.

    ``rejection(alpha)`` returns the predicate "data lies in the level-alpha
    rejection region".  The contour equals ``sup{beta: z not rejected at beta}``
    on ``H0`` and 1 elsewhere.
    """
    hits = np.array([bool(rejection(float(b))(z)) for b in _PROBES])
    if np.any(np.diff(hits.astype(int)) < 0):
        raise NestingError("rejection regions are not nested in alpha")
    level = _sup_level(lambda b: not rejection(b)(z))
    contains = H0.contains or (lambda t: bool(np.any(np.all(np.isclose(H0.points, t), axis=1))))

    def evaluate(theta):
        return level if contains(np.atleast_1d(theta)) else 1.0

    c = PossibilityContour(evaluate, H0.dim, label="test-family")
    c.null_plausibility = level  # type: ignore[attr-defined]
    return c


def im_from_confidence_family(
    regions: Callable[[object, float], Callable[[np.ndarray], bool]],
    f: Callable[[np.ndarray], np.ndarray],
    z,
    core,
    dim: int,
) -> PossibilityContour:
    """Possibilistic IM whose level sets reproduce nested confidence sets for ``f(theta)``.

    ``regions(z, alpha)`` returns the membership predicate of the level-alpha
    set; ``core`` must be a feature value inside every set.
    """
    core = np.atleast_1d(np.asarray(core, dtype=float))
    if not all(regions(z, float(b))(core) for b in _PROBES):
        raise NormalizationError("the confidence sets have no common point at the supplied core")

    def evaluate(theta):
        phi = np.atleast_1d(f(np.atleast_1d(np.asarray(theta, dtype=float))))
        return _sup_level(lambda b: bool(regions(z, b)(phi)))

    return PossibilityContour(evaluate, dim, label="confidence-family")


@dataclass
class ValidityTable:
    thetas: np.ndarray
    alphas: np.ndarray
    freq: np.ndarray  # (n_theta, n_alpha)
    reps: int
    bound: np.ndarray = field(init=False)

    def __post_init__(self):
        self.bound = self.alphas + 3.0 * np.sqrt(self.alphas * (1 - self.alphas) / self.reps)

    @property
    def passed(self) -> np.ndarray:
        return self.freq <= self.bound[None, :] + 1e-12

    @property
    def all_pass(self) -> bool:
        return bool(self.passed.all())

    def rows(self):
        for i, th in enumerate(self.thetas):
            for j, a in enumerate(self.alphas):
                yield th, float(a), float(self.freq[i, j]), float(self.bound[j]), bool(self.passed[i, j])


def validity_diagnostic(
    model: Model,
    thetas,
    alpha_grid: Sequence[float],
    reps: int,
    cfg: MonteCarloConfig,
    n: int,
    x=None,
    contour_fn: Callable[[Model, Dataset, np.ndarray, MonteCarloConfig], float] | None = None,
) -> ValidityTable:
    """Empirical ``P_theta{pi_Z(theta) <= alpha}`` over ``reps`` fresh datasets."""
    if reps < 500:
        raise ValueError("validity_diagnostic needs reps >= 500")
    contour_fn = contour_fn or contour_mc
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    alphas = np.asarray(alpha_grid, dtype=float)
    inner = replace(cfg, parallel=False)
    freq = np.empty((len(thetas), alphas.size))
    for i, th in enumerate(thetas):
        model.check_domain(th)
        size = n

        def block(b, start, stop, i=i, th=th):
            out = np.empty(stop - start)
            for k, r in enumerate(range(start, stop)):
                g = _rng.stream(cfg.seed, 0xDA7A, i, r)
                y = model.simulate(th, size, g, 1, x)[0]
                _, ok = model.fit(y, x)
                while not bool(ok):
                    y = model.simulate(th, size, g, 1, x)[0]
                    _, ok = model.fit(y, x)
                zr = Dataset(y, x=x)
                out[k] = contour_fn(model, zr, th, inner.child(0xC0, i, r))
            return out

        pis = np.concatenate(_rng.map_blocks(block, reps, parallel=cfg.parallel, block=max(1, reps // 32)))
        freq[i] = [(pis <= a).mean() for a in alphas]
    return ValidityTable(thetas, alphas, freq, reps)
