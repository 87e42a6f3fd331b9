"""Marginal contours for a feature ``phi = g(theta)`` of the parameter.

Two routes: *extension* maximizes the joint contour over the fiber
``{theta: g(theta) = phi}``; *profiling* validifies the profile relative
likelihood instead, which is usually more efficient.  The plug-in variants
side-step the outer supremum over the fiber at the cost of exact validity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import rng as _rng
from .engine import MonteCarloConfig, _tie_bound
from .errors import ConvergenceError, EmptyHypothesisError
from .models import Dataset, Gamma, Model, Multinomial, mle
from .possibility import HypothesisSet, PossibilityContour, possibility_of

__all__ = [
    "FeatureMap",
    "identity",
    "coordinate",
    "linear",
    "normal_mean",
    "normal_sd",
    "gamma_mean",
    "block_sums",
    "builtin_features",
    "extension_contour",
    "profile_relative_likelihood",
    "profile_contour",
    "plugin_profile_contour",
    "feature_mle",
]

FIBER_TOL = 1e-8


@dataclass
class FeatureMap:
    """A feature ``g`` with a parametrization of its fibers.

    ``fiber(phi, lam)`` returns a parameter point with ``g(theta) = phi`` for
    every nuisance value ``lam`` (a vector of length ``nuisance_dim``) and
    ``nuisance_of(theta)`` inverts it.  ``profile``, when given, is a batched
    closed-form constrained MLE ``(y, x, phi) -> (theta, ok)``.
    """

    g: Callable[[np.ndarray], np.ndarray]
    feature_dim: int
    fiber: Callable[[np.ndarray, np.ndarray], np.ndarray]
    nuisance_dim: int
    nuisance_of: Callable[[np.ndarray], np.ndarray]
    profile: Callable | None = None
    pivotal: bool = False
    nuisance_bounds: tuple[np.ndarray, np.ndarray] | None = None
    name: str = ""
    estimate: Callable | None = None
    affine: bool = False

    def __call__(self, theta) -> np.ndarray:
        return np.atleast_1d(self.g(np.asarray(theta, dtype=float)))

    def fiber_point(self, phi, lam) -> np.ndarray:
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        theta = np.asarray(self.fiber(phi, np.atleast_1d(np.asarray(lam, dtype=float))), dtype=float)
        err = np.max(np.abs(self(theta) - phi)) if theta.size else 0.0
        if err > FIBER_TOL * max(1.0, float(np.max(np.abs(phi)))):
            raise ValueError(f"fiber point misses the feature value by {err:.3g}")
        return theta


def identity(dim: int) -> FeatureMap:
    return FeatureMap(
        g=lambda t: t, feature_dim=dim,
        fiber=lambda phi, lam: phi, nuisance_dim=0,
        nuisance_of=lambda t: np.zeros(0), name="identity",
    )


def linear(c, solve_for: int | None = None, name: str = "") -> FeatureMap:
    """Scalar feature ``c . theta``; the fiber is parametrized by the other coordinates."""
    c = np.asarray(c, dtype=float)
    j = int(np.argmax(np.abs(c))) if solve_for is None else solve_for
    if c[j] == 0:
        raise ValueError("cannot solve the fiber for a zero coefficient")
    others = [i for i in range(c.size) if i != j]

    def fiber(phi, lam):
        theta = np.empty(c.size)
        theta[others] = lam
        theta[j] = (phi[0] - c[others] @ lam) / c[j]
        return theta

    return FeatureMap(
        g=lambda t: np.asarray(t)[..., :] @ c, feature_dim=1,
        fiber=fiber, nuisance_dim=c.size - 1,
        nuisance_of=lambda t: np.asarray(t)[others], name=name or f"linear{tuple(c)}",
        affine=True,
    )


def coordinate(j: int, dim: int) -> FeatureMap:
    e = np.zeros(dim)
    e[j] = 1.0
    fm = linear(e, solve_for=j, name=f"theta[{j}]")
    fm.g = lambda t: np.asarray(t)[..., j]
    return fm


def normal_mean() -> FeatureMap:
    def profile(y, x, phi):
        y = np.asarray(y, dtype=float)
        ybar = y.mean(axis=-1)
        s2 = np.mean((y - ybar[..., None]) ** 2, axis=-1)
        sig = np.sqrt(s2 + (ybar - phi[0]) ** 2)
        return np.stack([np.broadcast_to(phi[0], sig.shape), sig], axis=-1), sig > 0

    return FeatureMap(
        g=lambda t: np.asarray(t)[..., 0], feature_dim=1,
        fiber=lambda phi, lam: np.array([phi[0], np.exp(lam[0])]), nuisance_dim=1,
        nuisance_of=lambda t: np.log(np.asarray(t)[1:2]),
        profile=profile, pivotal=True, name="normal_mean",
    )


def normal_sd() -> FeatureMap:
    def profile(y, x, phi):
        ybar = np.asarray(y, dtype=float).mean(axis=-1)
        return np.stack([ybar, np.broadcast_to(phi[0], ybar.shape)], axis=-1), np.ones(ybar.shape, bool)

    return FeatureMap(
        g=lambda t: np.asarray(t)[..., 1], feature_dim=1,
        fiber=lambda phi, lam: np.array([lam[0], phi[0]]), nuisance_dim=1,
        nuisance_of=lambda t: np.asarray(t)[0:1],
        profile=profile, pivotal=True, name="normal_sd",
    )


def gamma_mean() -> FeatureMap:
    """Mean ``shape * scale`` of the gamma model; nuisance is log-shape."""
    return FeatureMap(
        g=lambda t: np.asarray(t)[..., 0] * np.asarray(t)[..., 1], feature_dim=1,
        fiber=lambda phi, lam: np.array([np.exp(lam[0]), phi[0] * np.exp(-lam[0])]),
        nuisance_dim=1,
        nuisance_of=lambda t: np.log(np.asarray(t)[0:1]),
        profile=lambda y, x, phi: Gamma().profile_mean(phi[0], y),
        nuisance_bounds=(np.array([np.log(1e-3)]), np.array([np.log(1e4)])),
        name="gamma_mean",
    )


def block_sums(blocks: Sequence[Sequence[int]], K: int) -> FeatureMap:
    """Block totals of a multinomial probability vector.

    Within-block proportions are the nuisance, parametrized by log-ratios to
    the block's first category.
    """
    blocks = [list(b) for b in blocks]
    covered = sorted(i for b in blocks for i in b)
    if covered != list(range(K)):
        raise ValueError("blocks must partition the categories")
    nuis = sum(len(b) - 1 for b in blocks)

    def g(t):
        t = np.asarray(t)
        return np.stack([t[..., b].sum(axis=-1) for b in blocks], axis=-1)

    def fiber(phi, lam):
        theta = np.empty(K)
        pos = 0
        for b, ph in zip(blocks, phi):
            w = np.exp(np.concatenate([[0.0], lam[pos: pos + len(b) - 1]]))
            theta[b] = ph * w / w.sum()
            pos += len(b) - 1
        return theta

    def nuisance_of(t):
        t = np.asarray(t, dtype=float)
        with np.errstate(divide="ignore"):
            return np.concatenate([np.log(t[b[1:]] / t[b[0]]) for b in blocks])

    def profile(y, x, phi):
        y = np.asarray(y, dtype=float)
        theta = np.empty(y.shape)
        for b, ph in zip(blocks, phi):
            tot = y[..., b].sum(axis=-1, keepdims=True)
            share = np.where(tot > 0, y[..., b] / np.where(tot > 0, tot, 1.0), 1.0 / len(b))
            theta[..., b] = ph * share
        return theta, np.ones(y.shape[:-1], dtype=bool)

    def estimate(y, x):
        # block totals over the grand total, without summing rounded shares
        y = np.asarray(y, dtype=float)
        return np.array([y[b].sum() for b in blocks]) / y.sum()

    return FeatureMap(g=g, feature_dim=len(blocks), fiber=fiber, nuisance_dim=nuis,
                      nuisance_of=nuisance_of, profile=profile, name="block_sums", estimate=estimate)


def builtin_features() -> dict[str, Callable[..., FeatureMap]]:
    return {
        "identity": identity,
        "coordinate": coordinate,
        "linear": linear,
        "normal_mean": normal_mean,
        "normal_sd": normal_sd,
        "gamma_mean": gamma_mean,
        "block_sums": block_sums,
    }


def feature_mle(model: Model, z: Dataset, f: FeatureMap) -> np.ndarray:
    """Maximizer of the profile likelihood, ``g(theta_hat)``.

    Features with a closed-form ``estimate`` compute it from the data directly.
    """
    if f.estimate is not None:
        return np.atleast_1d(f.estimate(z.y, z.x))
    that, _ = mle(model, z)
    return f(that)


# -- extension ----------------------------------------------------------------
def extension_contour(
    joint: PossibilityContour,
    f: FeatureMap,
    phi,
    lower=None,
    upper=None,
    grid=None,
    restarts: int = 16,
) -> float:
    """Supremum of the joint contour over the fiber of ``phi``.

    The fiber is searched over nuisance coordinates: a finite ``grid`` of
    nuisance values, or a box ``[lower, upper]`` (default: the feature's own
    nuisance bounds).  Unbounded fibers must be truncated by the caller.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if f.nuisance_dim == 0:
        return joint(f.fiber_point(phi, np.zeros(0)))
    if grid is not None:
        pts = np.array([f.fiber_point(phi, lam) for lam in np.asarray(grid, dtype=float).reshape(-1, f.nuisance_dim)])
        H = HypothesisSet.grid(pts, description=f"fiber {f.name}={phi}")
    else:
        if lower is None or upper is None:
            if f.nuisance_bounds is None:
                raise EmptyHypothesisError("unbounded fiber: supply nuisance bounds or a grid")
            lower, upper = f.nuisance_bounds
        H = HypothesisSet.box(lower, upper, transform=lambda lam: f.fiber(phi, lam), dim=joint.dim,
                              restarts=restarts, description=f"fiber {f.name}={phi}")
    return possibility_of(joint, H)


# -- profiling ----------------------------------------------------------------
def _constrained_mle_numeric(model: Model, y, x, f: FeatureMap, phi, lam0, restarts: int = 8, seed: int = 0):
    """Maximize the log-likelihood over the fiber by multi-start BFGS in nuisance coordinates."""
    g = _rng.stream(seed, 0xF1B)

    def negll(lam):
        theta = f.fiber(phi, lam)
        if not model.in_domain(theta):
            return np.inf
        v = float(model.loglik(theta, y, x))
        return -v if np.isfinite(v) else np.inf

    starts = [np.asarray(lam0, dtype=float)]
    starts += [starts[0] + g.normal(scale=1.0, size=f.nuisance_dim) for _ in range(restarts - 1)]
    best = None
    for s in starts:
        if not np.isfinite(negll(s)):
            continue
        res = optimize.minimize(negll, s, method="BFGS", options={"gtol": 1e-8, "maxiter": 500})
        cand = res if np.isfinite(res.fun) else None
        if cand is not None and (best is None or cand.fun < best.fun):
            best = cand
        nm = optimize.minimize(negll, best.x if best is not None else s, method="Nelder-Mead",
                               options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 4000})
        if np.isfinite(nm.fun) and (best is None or nm.fun < best.fun):
            best = nm
    if best is None:
        raise ConvergenceError(f"profile optimizer found no feasible fiber point for phi={phi}")
    return f.fiber(phi, best.x), -best.fun


def constrained_mle(model: Model, z: Dataset, f: FeatureMap, phi, restarts: int = 8) -> np.ndarray:
    """Maximizer of the likelihood over the fiber of ``phi``."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if f.profile is not None:
        theta, ok = f.profile(z.y, z.x, phi)
        if not bool(np.all(ok)):
            raise ConvergenceError(f"constrained MLE failed at phi={phi}")
        return np.asarray(theta, dtype=float)
    if f.nuisance_dim == 0:
        return f.fiber_point(phi, np.zeros(0))
    if f.affine and hasattr(model, "fit_affine"):
        that, _ = mle(model, z)
        theta, _, ok = model.fit_affine(z.y, z.x, *_affine_fiber(f, phi), lam0=np.nan_to_num(f.nuisance_of(that)))
        if not bool(ok):
            raise ConvergenceError(f"constrained MLE failed at phi={phi}")
        return theta
    that, _ = mle(model, z)
    lam0 = np.nan_to_num(f.nuisance_of(that), nan=0.0, posinf=0.0, neginf=0.0)
    theta, _ = _constrained_mle_numeric(model, z.y, z.x, f, phi, lam0, restarts=restarts)
    return theta


def _affine_fiber(f: FeatureMap, phi):
    """``(theta0, V)`` with ``f.fiber(phi, lam) = theta0 + V lam``."""
    theta0 = f.fiber(phi, np.zeros(f.nuisance_dim))
    V = np.column_stack([f.fiber(phi, e) - theta0 for e in np.eye(f.nuisance_dim)])
    return theta0, V


def _profile_log_rl_batch(model: Model, f: FeatureMap, Y, x, phi) -> tuple[np.ndarray, np.ndarray]:
    """``log R^pr(Y_b, phi)`` for a batch of datasets."""
    that, ok = model.fit(Y, x)
    top = model.loglik(that, Y, x)
    if f.profile is None and f.affine and f.nuisance_dim > 0 and hasattr(model, "fit_affine"):
        theta0, V = _affine_fiber(f, phi)
        lam0 = np.stack([f.nuisance_of(t) for t in np.asarray(that).reshape(-1, model.dim)])
        _, best, ok2 = model.fit_affine(Y, x, theta0, V, np.nan_to_num(lam0))
        lr = best - top
        ok = ok & ok2
    elif f.profile is not None:
        tphi, ok2 = f.profile(Y, x, phi)
        lr = model.loglik(tphi, Y, x) - top
        ok = ok & ok2
    elif f.nuisance_dim == 0:
        lr = model.loglik(f.fiber_point(phi, np.zeros(0)), Y, x) - top
    else:
        lr = np.empty(Y.shape[0])
        for b in range(Y.shape[0]):
            lam0 = np.nan_to_num(f.nuisance_of(that[b]), nan=0.0, posinf=0.0, neginf=0.0)
            _, best = _constrained_mle_numeric(model, Y[b], x, f, phi, lam0, restarts=2)
            lr[b] = best - top[b]
    lr = np.where(np.isnan(lr), -np.inf, lr)
    return np.minimum(lr, 0.0), ok


def _profile_log_rl(model: Model, z: Dataset, f: FeatureMap, phi) -> float:
    mle(model, z)
    lr, ok = _profile_log_rl_batch(model, f, z.y[None, :], z.x, np.atleast_1d(np.asarray(phi, float)))
    if not bool(ok[0]):
        raise ConvergenceError("profile likelihood optimization failed on the observed data")
    return float(lr[0])


def profile_relative_likelihood(model: Model, z: Dataset, f: FeatureMap, phi) -> float:
    """``sup{R(z, theta): g(theta) = phi}``."""
    return float(np.exp(_profile_log_rl(model, z, f, phi)))


def _validify_at(model, z, f, phi, theta, lr_obs, cfg, key) -> float:
    """Fraction of datasets drawn at ``theta`` whose profile ranking is <= the observed one."""
    bound = _tie_bound(lr_obs)
    size = model.size_of(z.y)

    def block(b, start, stop):
        g = _rng.stream(cfg.seed, key, b)
        lr, ok = _profile_log_rl_batch(model, f, model.simulate(theta, size, g, stop - start, z.x), z.x, phi)
        for _ in range(20):
            bad = np.flatnonzero(~ok)
            if bad.size == 0:
                break
            lr_new, ok_new = _profile_log_rl_batch(model, f, model.simulate(theta, size, g, bad.size, z.x), z.x, phi)
            lr[bad], ok[bad] = lr_new, ok_new
        return int(np.count_nonzero(lr[ok] <= bound))

    return sum(_rng.map_blocks(block, cfg.M, parallel=cfg.parallel)) / cfg.M


def fiber_probes(model: Model, z: Dataset, f: FeatureMap, phi, count: int, lower=None, upper=None) -> np.ndarray:
    """Fiber points around the constrained MLE, spread along nuisance directions.

    Spacing uses the curvature of the constrained log-likelihood; probes are
    clipped to the nuisance box when one is known.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    center = constrained_mle(model, z, f, phi)
    if f.nuisance_dim == 0 or count <= 1:
        return center[None, :]
    lam_hat = np.asarray(f.nuisance_of(center), dtype=float)
    if not np.all(np.isfinite(lam_hat)):
        return center[None, :]
    if lower is None and f.nuisance_bounds is not None:
        lower, upper = f.nuisance_bounds

    def ll(lam):
        th = f.fiber(phi, lam)
        return float(model.loglik(th, z.y, z.x)) if model.in_domain(th) else -np.inf

    sd = np.empty(f.nuisance_dim)
    for j in range(f.nuisance_dim):
        h = 1e-3 * max(1.0, abs(lam_hat[j]))
        e = np.zeros(f.nuisance_dim); e[j] = h
        curv = -(ll(lam_hat + e) - 2 * ll(lam_hat) + ll(lam_hat - e)) / h**2
        sd[j] = 1.0 / np.sqrt(curv) if np.isfinite(curv) and curv > 0 else 1.0
    steps = []
    mults = [1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 0.5, -0.5]
    for m in mults:
        for j in range(f.nuisance_dim):
            steps.append((j, m))
    pts = [center]
    for j, m in steps:
        if len(pts) >= count:
            break
        lam = lam_hat.copy()
        lam[j] += m * sd[j]
        if lower is not None:
            lam = np.clip(lam, lower, upper)
        th = f.fiber(phi, lam)
        if model.in_domain(th):
            pts.append(th)
    return np.array(pts)


def profile_contour(
    model: Model,
    z: Dataset,
    f: FeatureMap,
    phi,
    cfg: MonteCarloConfig,
    fiber_probe_count: int = 8,
) -> float:
    """Validified profile relative likelihood, maximized over fiber probes.

    Features declared pivotal use a single probe since the law of the profile
    ranking is then the same everywhere on the fiber.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    lr_obs = _profile_log_rl(model, z, f, phi)
    if lr_obs >= 0.0:
        return 1.0
    if lr_obs == -np.inf:
        return 0.0
    count = 1 if f.pivotal else fiber_probe_count
    probes = fiber_probes(model, z, f, phi, count)
    return max(_validify_at(model, z, f, phi, th, lr_obs, cfg, key=j) for j, th in enumerate(probes))


def plugin_profile_contour(
    model: Model,
    z: Dataset,
    f: FeatureMap,
    phi,
    cfg: MonteCarloConfig,
    variant: str = "full-mle",
) -> float:
    """Profile contour with the outer supremum replaced by a plug-in estimate.

    ``full-mle`` simulates at the MLE and ranks against ``g(theta_hat)``;
    ``nuisance-mle`` simulates at ``(phi, constrained nuisance MLE)``.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    lr_obs = _profile_log_rl(model, z, f, phi)
    if lr_obs >= 0.0:
        return 1.0
    if lr_obs == -np.inf:
        return 0.0
    if variant == "full-mle":
        that, _ = mle(model, z)
        return _validify_at(model, z, f, f(that), that, lr_obs, cfg, key=0x91)
    if variant == "nuisance-mle":
        theta_phi = constrained_mle(model, z, f, phi)
        return _validify_at(model, z, f, phi, theta_phi, lr_obs, cfg, key=0x92)
    raise ValueError(f"unknown plug-in variant '{variant}'")
