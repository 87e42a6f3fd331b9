"""Sampling the inner probabilistic approximation of a possibilistic IM.

Draw a level ``A ~ Unif(0, 1)``, then a point on the boundary of the level-A
set.  The boundary is replaced by an ellipsoid centred at the MLE, shaped by
the inverse observed information and scaled per level so the true level set
fits inside it.  Samples can be turned back into a contour by ranking them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .errors import MultimodalContourError, SingularCovarianceError
from .models import Dataset, Model, mle
from .possibility import GaussianPossibilityParams, PossibilityContour, chi2_isf

__all__ = [
    "EllipsoidApprox",
    "CredalSampleSet",
    "calibrate_ellipsoid",
    "sample_inner_approx",
    "contour_from_samples",
    "sample_contour",
]


def _gauss_radius(alpha, d: int):
    a = np.clip(np.asarray(alpha, dtype=float), 1e-300, 1.0)
    return np.sqrt(np.maximum(chi2_isf(a, d), 0.0))


@dataclass
class EllipsoidApprox:
    """Level-indexed ellipsoids ``(t - c)' S^{-1} (t - c) = r(alpha)^2`` in free coordinates."""

    center: np.ndarray
    shape: np.ndarray
    radius_fn: Callable[[np.ndarray], np.ndarray]
    from_free: Callable[[np.ndarray], np.ndarray] = field(default=lambda e: e)
    alphas: np.ndarray | None = None
    radii: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.center = np.atleast_1d(np.asarray(self.center, dtype=float))
        self.shape = np.atleast_2d(np.asarray(self.shape, dtype=float))
        try:
            self.chol = np.linalg.cholesky(self.shape)
        except np.linalg.LinAlgError:
            raise SingularCovarianceError("ellipsoid shape must be positive definite") from None

    @property
    def d(self) -> int:
        return self.center.size

    def radius(self, alpha):
        a = np.asarray(alpha, dtype=float)
        r = np.where(a >= 1.0, 0.0, self.radius_fn(np.clip(a, 0.0, 1.0)))
        return float(r) if r.ndim == 0 else r

    def boundary(self, alpha, u) -> np.ndarray:
        """Point(s) at level ``alpha`` in whitened direction(s) ``u`` (free coordinates)."""
        u = np.atleast_2d(u)
        r = np.atleast_1d(self.radius(alpha))
        return self.center + (r[:, None] * u) @ self.chol.T

    def inside(self, eta, alpha) -> np.ndarray:
        """Whether free-coordinate points lie within the level-``alpha`` ellipsoid."""
        eta = np.atleast_2d(eta)
        w = np.linalg.solve(self.chol, (eta - self.center).T)
        return np.sum(w * w, axis=0) <= self.radius(alpha) ** 2 * (1 + 1e-12)

    @classmethod
    def gaussian(cls, params: GaussianPossibilityParams, inflation: float = 1.0) -> "EllipsoidApprox":
        """Exact level sets of a Gaussian possibility contour."""
        d = params.dim
        return cls(params.mean, params.covariance, lambda a: inflation * _gauss_radius(a, d))

    @classmethod
    def from_grid(cls, center, shape, alphas, radii, from_free=None) -> "EllipsoidApprox":
        """Interpolate radii given on a level grid.

        Radii are interpolated as multiples of the Gaussian radius (so the
        surrogate behaves sensibly between and beyond grid levels) and then
        forced to be non-increasing in the level.
        """
        alphas = np.asarray(alphas, dtype=float)
        radii = np.asarray(radii, dtype=float)
        order = np.argsort(alphas)
        alphas, radii = alphas[order], radii[order]
        d = np.atleast_1d(center).size
        q = _gauss_radius(alphas, d)
        ratio = np.where(q > 0, radii / np.where(q > 0, q, 1.0), 0.0)
        keep = q > 0
        a_k, s_k = (alphas[keep], ratio[keep]) if keep.any() else (np.array([0.5]), np.array([0.0]))
        fine = np.concatenate([np.logspace(-10, -2, 400, endpoint=False), np.linspace(0.01, 1.0, 2000)])
        r_fine = np.interp(fine, a_k, s_k) * _gauss_radius(fine, d)
        r_fine = np.maximum.accumulate(r_fine[::-1])[::-1]
        s_low = s_k[0]

        def radius_fn(a):
            a = np.asarray(a, dtype=float)
            tail = s_low * _gauss_radius(a, d)
            return np.where(a < fine[0], np.maximum(tail, r_fine[0]), np.interp(a, fine, r_fine))

        return cls(center, shape, radius_fn, from_free or (lambda e: e), alphas, radii)


def calibrate_ellipsoid(
    contour: PossibilityContour,
    model: Model | None,
    z: Dataset | None,
    alpha_grid: Sequence[float] = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    probes_per_alpha: int = 16,
    inflation: float = 1.1,
    seed: int = 0,
    rtol: float = 1e-4,
    monotone_tol: float = 0.02,
    center=None,
    shape=None,
    log_positive: bool = True,
) -> EllipsoidApprox:
    """Fit level-wise radii so each level set sits inside its ellipsoid.

    Along each of ``probes_per_alpha`` whitened directions the crossing radius
    of every level is found by bisection; the level's radius is the largest
    crossing times ``inflation``.  A contour that rises along a probe ray by
    more than ``monotone_tol`` is rejected as multimodal.

    With ``log_positive`` the ellipsoids live on the log scale of positive
    coordinates (level sets of scale parameters are far from elliptical on
    the natural scale); ``center``/``shape`` are then taken in that chart.
    """
    from_free = model.from_free if model is not None else (lambda e: e)
    in_domain = model.in_domain if model is not None else (lambda t: True)
    pos = np.zeros(0, dtype=bool)
    if model is not None and log_positive and any(model.positive):
        k = model.n_free
        pos = np.array(model.positive[:k] + (False,) * (k - len(model.positive[:k])))
        natural = from_free

        def from_free(eta, _nat=natural, _pos=pos):
            eta = np.array(eta, dtype=float)
            eta[..., _pos] = np.exp(eta[..., _pos])
            return _nat(eta)

    if center is None or shape is None:
        if model is None or z is None:
            raise ValueError("center and shape are required when no model/data is given")
        that, _ = mle(model, z)
        eta_hat = model.to_free(that)
        jac = np.where(pos, eta_hat, 1.0) if pos.size else np.ones_like(eta_hat)
        if center is None:
            center = np.where(pos, np.log(np.where(pos, eta_hat, 1.0)), eta_hat) if pos.size else eta_hat
        if shape is None:
            J = model.obs_information(z.y, z.x, that)
            try:
                # d eta / d log eta = eta on the log-scaled coordinates
                shape = np.linalg.inv(J * np.outer(jac, jac))
            except np.linalg.LinAlgError:
                raise SingularCovarianceError("observed information is singular") from None
    center = np.atleast_1d(np.asarray(center, dtype=float))
    shape = np.atleast_2d(np.asarray(shape, dtype=float))
    d = center.size
    chol = np.linalg.cholesky(shape)
    alphas = np.sort(np.asarray(alpha_grid, dtype=float))
    alphas = alphas[(alphas > 0) & (alphas < 1)]

    gen = _rng.stream(seed, 0xE11)
    axes = np.vstack([np.eye(d), -np.eye(d)])
    extra = max(0, probes_per_alpha - len(axes))
    rand = gen.standard_normal((extra, d))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    dirs = np.vstack([axes, rand])[:probes_per_alpha] if probes_per_alpha >= len(axes) else axes[:probes_per_alpha]

    def along(u, t):
        eta = center + t * (chol @ u)
        theta = from_free(eta)
        return contour(theta) if in_domain(theta) else 0.0

    radii = np.zeros(alphas.size)
    for u in dirs:
        # monotonicity check out to where the smallest level is crossed
        t_max = 2.0 * float(_gauss_radius(alphas[0], d))
        for _ in range(30):
            if along(u, t_max) < alphas[0]:
                break
            t_max *= 2.0
        ts = np.linspace(0.0, t_max, 17)
        vals = np.array([along(u, t) for t in ts])
        if np.any(np.maximum.accumulate(vals[::-1])[::-1] - vals > monotone_tol):
            raise MultimodalContourError(
                "contour increases along a probe ray; use a grid evaluation instead of ellipsoids"
            )
        for k, a in enumerate(alphas):
            # bracket from the coarse scan, then bisect
            above = np.flatnonzero(vals >= a)
            lo = ts[above[-1]] if above.size else 0.0
            hi = ts[min(above[-1] + 1, len(ts) - 1)] if above.size else ts[1]
            if along(u, hi) >= a:
                hi = t_max
            while hi - lo > rtol * max(hi, 1e-12):
                mid = 0.5 * (lo + hi)
                if along(u, mid) >= a:
                    lo = mid
                else:
                    hi = mid
            radii[k] = max(radii[k], hi)
    radii *= inflation
    E = EllipsoidApprox.from_grid(center, shape, np.append(alphas, 1.0), np.append(radii, 0.0),
                                  from_free=from_free)
    if model is not None and not model.pivotal:
        E.notes.append("non-pivotal ranking: contour reconstructed from samples may not be monotone in it")
    return E


@dataclass
class CredalSampleSet:
    levels: np.ndarray
    points: np.ndarray
    seed: int
    M: int
    free_points: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    def project(self, g: Callable[[np.ndarray], np.ndarray]) -> "CredalSampleSet":
        """Push the draws through a feature map (e.g. block sums)."""
        pts = np.asarray([np.atleast_1d(g(p)) for p in self.points])
        return CredalSampleSet(self.levels, pts, self.seed, self.M, None, list(self.notes))


def sample_inner_approx(ellipsoid: EllipsoidApprox, M: int, seed: int, parallel: bool = True) -> CredalSampleSet:
    """``M`` draws: uniform level, then a uniform sphere direction pushed onto the ellipsoid."""
    d = ellipsoid.d

    def block(b, start, stop):
        g = _rng.stream(seed, 0xC4ED, b)
        a = g.random(stop - start)
        u = g.standard_normal((stop - start, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return a, u

    parts = _rng.map_blocks(block, M, parallel=parallel)
    levels = np.concatenate([p[0] for p in parts])
    dirs = np.concatenate([p[1] for p in parts])
    free = ellipsoid.center + (np.atleast_1d(ellipsoid.radius(levels))[:, None] * dirs) @ ellipsoid.chol.T
    points = np.asarray(ellipsoid.from_free(free))
    return CredalSampleSet(levels, points, seed, M, free, list(ellipsoid.notes))


class SampleContour:
    """Empirical probability-to-possibility transform of draws under a ranking."""

    def __init__(self, samples: CredalSampleSet, ranking: Callable[[np.ndarray], float]):
        scores = np.array([float(ranking(p)) for p in samples.points])
        scores = np.where(np.isnan(scores), -np.inf, scores)
        self.sorted = np.sort(scores)
        self.M = scores.size
        self.ranking = ranking

    def __call__(self, theta) -> float:
        r = float(self.ranking(np.asarray(theta, dtype=float)))
        return np.searchsorted(self.sorted, r, side="right") / self.M


def sample_contour(samples: CredalSampleSet, ranking: Callable[[np.ndarray], float], dim: int | None = None,
                   normalizer_hint=None) -> PossibilityContour:
    sc = SampleContour(samples, ranking)
    dim = dim or np.atleast_2d(samples.points).shape[1]
    return PossibilityContour(sc, dim, normalizer_hint=normalizer_hint, ranking=ranking, label="from-samples")


def contour_from_samples(samples: CredalSampleSet, ranking: Callable[[np.ndarray], float], theta) -> float:
    """``(1/M) #{m: ranking(theta_m) <= ranking(theta)}``."""
    return SampleContour(samples, ranking)(theta)
