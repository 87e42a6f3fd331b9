"""Possibility calculus: contours, maxitive measures and their duals.

A possibility measure is determined by optimizing its contour rather than
integrating a density, so most of this module is about *searching* sets of
parameter values.  Hypotheses carry their own search strategy (a finite grid
or a box-constrained multi-start maximizer).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from . import rng as _rng
from .errors import (
    DimensionMismatchError,
    EmptyHypothesisError,
    SingularCovarianceError,
)

__all__ = [
    "PossibilityContour",
    "HypothesisSet",
    "GaussianPossibilityParams",
    "CredalReport",
    "chi2_sf",
    "chi2_cdf",
    "chi2_isf",
    "possibility_of",
    "necessity_of",
    "prob_to_poss",
    "gaussian_contour",
    "credal_membership",
]


def chi2_cdf(q, d: int):
    """ChiSq(d) distribution function via the regularized lower incomplete gamma."""
    q = np.maximum(np.asarray(q, dtype=float), 0.0)
    return special.gammainc(0.5 * d, 0.5 * q)


def chi2_sf(q, d: int):
    """Upper tail ``1 - F_d(q)``, computed directly to keep relative accuracy."""
    q = np.maximum(np.asarray(q, dtype=float), 0.0)
    return special.gammaincc(0.5 * d, 0.5 * q)


def chi2_isf(p, d: int):
    """Inverse of :func:`chi2_sf`."""
    return 2.0 * special.gammainccinv(0.5 * d, np.asarray(p, dtype=float))


def _as_points(theta, dim: int) -> np.ndarray:
    pts = np.atleast_1d(np.asarray(theta, dtype=float))
    if pts.ndim == 1:
        pts = pts.reshape(1, -1) if dim > 1 or pts.size == 1 else pts.reshape(-1, 1)
    if pts.shape[-1] != dim:
        raise DimensionMismatchError(f"expected points of dimension {dim}, got {pts.shape[-1]}")
    return pts


@dataclass
class PossibilityContour:
    """A map from parameter points to plausibility in [0, 1].

    ``ranking`` is optional: a continuous score the contour is non-decreasing
    in.  When present, box searches maximize the ranking (smooth) and the
    contour is read off at the maximizer, which is far more reliable than
    optimizing a Monte Carlo step function.
    """

    evaluate: Callable[[np.ndarray], float]
    dim: int
    normalizer_hint: np.ndarray | None = None
    ranking: Callable[[np.ndarray], float] | None = None
    vectorized: bool = False
    label: str = ""

    def __call__(self, theta) -> float:
        value = float(self.evaluate(np.asarray(theta, dtype=float)))
        return min(1.0, max(0.0, value))

    def many(self, points) -> np.ndarray:
        pts = _as_points(points, self.dim)
        if self.vectorized:
            vals = np.asarray(self.evaluate(pts), dtype=float).reshape(-1)
        else:
            vals = np.array([float(self.evaluate(p)) for p in pts])
        return np.clip(vals, 0.0, 1.0)


@dataclass
class HypothesisSet:
    """A subset of parameter space paired with the strategy used to search it.

    Exactly one of ``points`` (finite grid) or ``lower``/``upper`` (box in
    search coordinates) is set; ``transform`` maps search coordinates to
    parameter points, which lets a box describe, e.g., a curve or a cone.
    """

    dim: int
    points: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    transform: Callable[[np.ndarray], np.ndarray] | None = None
    contains: Callable[[np.ndarray], bool] | None = None
    restarts: int = 16
    tol: float = 1e-8
    seed: int = 0
    description: str = ""
    _empty: bool = field(default=False, repr=False)

    @classmethod
    def grid(cls, points, contains=None, description: str = "") -> "HypothesisSet":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        return cls(dim=pts.shape[1], points=pts, contains=contains, description=description)

    @classmethod
    def box(
        cls,
        lower,
        upper,
        transform=None,
        dim: int | None = None,
        contains=None,
        restarts: int = 16,
        tol: float = 1e-8,
        seed: int = 0,
        description: str = "",
    ) -> "HypothesisSet":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("box bounds must have equal shape and lower <= upper")
        if dim is None:
            dim = lo.size if transform is None else np.atleast_1d(transform(0.5 * (lo + hi))).size
        return cls(dim=dim, lower=lo, upper=hi, transform=transform, contains=contains,
                   restarts=restarts, tol=tol, seed=seed, description=description)

    @classmethod
    def empty(cls, dim: int, description: str = "empty set") -> "HypothesisSet":
        return cls(dim=dim, description=description, _empty=True)

    @property
    def is_grid(self) -> bool:
        return self.points is not None

    def members(self) -> np.ndarray:
        """Grid members passing ``contains`` (grid strategy only)."""
        if not self.is_grid:
            raise TypeError("members() requires a finite-grid hypothesis")
        pts = self.points
        if self.contains is not None:
            keep = np.array([bool(self.contains(p)) for p in pts], dtype=bool)
            pts = pts[keep]
        return pts

    def _map(self, u: np.ndarray) -> np.ndarray:
        return np.atleast_1d(self.transform(u) if self.transform is not None else u)

    def maximize(self, score: Callable[[np.ndarray], float]) -> tuple[np.ndarray, float]:
        """Return ``(argmax, max)`` of ``score`` over the set.

        Raises :class:`EmptyHypothesisError` if the search finds no member.
        """
        if self._empty:
            raise EmptyHypothesisError(f"hypothesis '{self.description}' is empty")
        if self.is_grid:
            pts = self.members()
            if len(pts) == 0:
                raise EmptyHypothesisError(f"no grid point satisfies '{self.description}'")
            vals = np.array([float(score(p)) for p in pts])
            i = int(np.argmax(vals))
            return pts[i], float(vals[i])
        return self._box_maximize(score)

    def _box_maximize(self, score):
        lo, hi = self.lower, self.upper
        gen = _rng.stream(self.seed, 0x5EA)

        def objective(u):
            u = np.clip(u, lo, hi)
            theta = self._map(u)
            if self.contains is not None and not self.contains(theta):
                return np.inf
            val = float(score(theta))
            return -val if np.isfinite(val) else np.inf

        # screen random points, then polish the best ``restarts`` of them
        width = hi - lo
        n_screen = max(64, 16 * lo.size) + self.restarts
        cand = lo + width * gen.random((n_screen, lo.size))
        cand[0] = 0.5 * (lo + hi)
        vals = np.array([objective(u) for u in cand])
        finite = np.isfinite(vals)
        if not finite.any():
            raise EmptyHypothesisError(f"box search found no member of '{self.description}'")
        order = np.argsort(vals)[: self.restarts]
        best_u, best_v = cand[order[0]], vals[order[0]]
        bounds = list(zip(lo, hi))
        for i in order:
            if not np.isfinite(vals[i]):
                continue
            if np.all(width == 0):
                break
            res = optimize.minimize(
                objective, cand[i], method="Nelder-Mead", bounds=bounds,
                options={"xatol": self.tol, "fatol": self.tol, "maxiter": 400 * lo.size},
            )
            if res.fun < best_v:
                best_u, best_v = np.clip(res.x, lo, hi), res.fun
        return self._map(best_u), float(-best_v)


def _check_dims(contour: PossibilityContour, H: HypothesisSet) -> None:
    if contour.dim != H.dim:
        raise DimensionMismatchError(
            f"contour has dimension {contour.dim} but hypothesis has {H.dim}"
        )


def possibility_of(contour: PossibilityContour, H: HypothesisSet) -> float:
    """Upper probability of ``H``: the supremum of the contour over it."""
    _check_dims(contour, H)
    if H.is_grid or contour.ranking is None:
        _, value = H.maximize(contour)
        return min(1.0, max(0.0, value))
    theta, _ = H.maximize(contour.ranking)
    return contour(theta)


def necessity_of(
    contour: PossibilityContour,
    H: HypothesisSet,
    complement_search: HypothesisSet,
) -> float:
    """Lower probability of ``H``, ``1 - possibility_of(complement)``.

    ``complement_search`` describes the complement of ``H``; an empty
    complement has supremum 0, so the full space has necessity 1.
    """
    _check_dims(contour, H)
    try:
        upper_c = possibility_of(contour, complement_search)
    except EmptyHypothesisError:
        upper_c = 0.0
    return 1.0 - upper_c


def prob_to_poss(
    density: Callable[[np.ndarray], np.ndarray],
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    y,
    M: int,
    seed: int,
    parallel: bool = True,
) -> float:
    """Monte Carlo probability-to-possibility transform at ``y``.

    Estimates ``P{density(Y) <= density(y)}`` from ``M`` draws of ``sampler``.
    ``density`` must accept a batch of draws; ties count toward the event.
    Passing a log-density is equivalent since the transform is rank-based.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    ref = np.asarray(density(np.asarray(y, dtype=float)[None, ...]), dtype=float).reshape(-1)[0]
    if not np.isfinite(ref) and not (np.isinf(ref) and ref < 0):
        raise ValueError(f"density at y is not finite: {ref}")

    def count(b, start, stop):
        draws = sampler(_rng.stream(seed, 0xA11, b), stop - start)
        return int(np.count_nonzero(np.asarray(density(draws)).reshape(-1) <= ref))

    return sum(_rng.map_blocks(count, M, parallel=parallel)) / M


@dataclass(frozen=True)
class GaussianPossibilityParams:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        v = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if v.shape != (m.size, m.size):
            raise DimensionMismatchError(f"covariance shape {v.shape} does not match mean of size {m.size}")
        scale = max(np.max(np.abs(v)), np.finfo(float).tiny)
        if np.max(np.abs(v - v.T)) > 1e-10 * scale:
            raise ValueError("covariance must be symmetric")
        eig = np.linalg.eigvalsh(0.5 * (v + v.T))
        if eig.min() <= 0:
            raise SingularCovarianceError("covariance must be positive definite")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "covariance", 0.5 * (v + v.T))

    @property
    def dim(self) -> int:
        return self.mean.size

    def mahalanobis2(self, y) -> np.ndarray:
        pts = _as_points(y, self.dim)
        chol = np.linalg.cholesky(self.covariance)
        w = np.linalg.solve(chol, (pts - self.mean).T)
        return np.sum(w * w, axis=0)

    def contour(self) -> PossibilityContour:
        return PossibilityContour(
            evaluate=lambda y: gaussian_contour(self, y),
            dim=self.dim,
            normalizer_hint=self.mean.copy(),
            ranking=lambda y: -float(self.mahalanobis2(y)[0]),
            label="gaussian",
        )


def gaussian_contour(params: GaussianPossibilityParams, y):
    """Gaussian possibility contour ``1 - F_d(Mahalanobis^2)``.

    Returns a float for a single point and an array for a batch of points.
    """
    q = params.mahalanobis2(y)
    out = chi2_sf(q, params.dim)
    y = np.asarray(y, dtype=float)
    single = y.ndim == 0 or (y.ndim == 1 and (params.dim > 1 or y.size == 1))
    return float(out[0]) if single else out


@dataclass
class CredalReport:
    alphas: np.ndarray
    mass: np.ndarray
    required: np.ndarray
    slack: np.ndarray
    ok: np.ndarray

    @property
    def accepted(self) -> bool:
        return bool(np.all(self.ok))

    def rows(self) -> list[tuple[float, float, float, bool]]:
        return [(float(a), float(m), float(r), bool(o))
                for a, m, r, o in zip(self.alphas, self.mass, self.required, self.ok)]


def credal_membership(
    points,
    contour: PossibilityContour,
    alpha_grid: Sequence[float],
    weights=None,
    slack: float | Sequence[float] | None = None,
    contour_values=None,
) -> CredalReport:
    """Check a weighted point set against ``Q{contour > alpha} >= 1 - alpha``.

    ``slack`` defaults to three binomial standard errors at the Kish effective
    sample size.  Precomputed ``contour_values`` at ``points`` may be supplied
    to avoid re-evaluating an expensive contour.
    """
    alphas = np.asarray(alpha_grid, dtype=float)
    if np.any((alphas < 0) | (alphas > 1)):
        raise ValueError("alpha_grid must lie in [0, 1]")
    if contour_values is None:
        pts = _as_points(points, contour.dim)
        if len(pts) == 0:
            raise ValueError("empty sample")
        vals = contour.many(pts)
    else:
        vals = np.asarray(contour_values, dtype=float).reshape(-1)
        if vals.size == 0:
            raise ValueError("empty sample")
    w = np.ones(vals.size) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != vals.shape or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative, one per point, with positive sum")
    w = w / w.sum()
    mass = np.array([w[vals > a].sum() for a in alphas])
    required = 1.0 - alphas
    if slack is None:
        n_eff = 1.0 / np.sum(w * w)
        slack_arr = 3.0 * np.sqrt(alphas * (1.0 - alphas) / n_eff)
    else:
        slack_arr = np.broadcast_to(np.asarray(slack, dtype=float), alphas.shape).copy()
    ok = mass >= required - slack_arr - 1e-12
    return CredalReport(alphas, mass, required, slack_arr, ok)
