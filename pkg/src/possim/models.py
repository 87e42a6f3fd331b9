"""Parametric sampling models and datasets.

Each model works on arrays whose *last* axis holds the observations of one
dataset; any leading axes are replicate (batch) axes.  Parameters are passed
as arrays whose last axis has length ``dim`` and broadcast against the batch.
This lets the Monte Carlo code evaluate thousands of simulated datasets with a
single call.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import optimize, special

from .errors import BoundaryMLEError, ConvergenceError, DomainError, FixtureMismatchError

__all__ = [
    "Dataset",
    "MLEReport",
    "Model",
    "Normal",
    "NormalKnownSigma",
    "Gamma",
    "LogisticBinomial",
    "Multinomial",
    "LinearRegression",
    "builtin_models",
    "make_model",
    "mle",
    "relative_likelihood",
    "read_dataset",
    "fixture",
    "check_fixture",
]

_LOG2PI = math.log(2.0 * math.pi)


@dataclass
class Dataset:
    """Observed records.  ``x`` holds fixed covariates for regression models."""

    y: np.ndarray
    x: np.ndarray | None = None
    label: str = ""
    units: str = ""

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or self.y.size < 1:
            raise ValueError("a dataset needs a non-empty 1-d array of observations")
        if self.x is not None:
            self.x = np.asarray(self.x, dtype=float)
            if self.x.shape != self.y.shape:
                raise ValueError("covariates and responses must have the same length")

    @property
    def n(self) -> int:
        return self.y.size


@dataclass
class MLEReport:
    converged: bool
    method: str
    iterations: int = 0
    grad_norm: float = 0.0
    message: str = ""


class Model:
    """Base class for a parametric family ``{P_theta}``.

    Subclasses implement :meth:`loglik`, :meth:`fit` and :meth:`simulate`.
    The defaults here cover domain checks, free-coordinate maps (identity
    unless the parameter lives on a constrained manifold) and a numerical
    observed information matrix.
    """

    name = "model"
    dim = 1
    param_names: tuple[str, ...] = ()
    positive: tuple[bool, ...] = ()
    pivotal = False

    @property
    def n_free(self) -> int:
        return self.dim

    # -- likelihood -------------------------------------------------------
    def loglik(self, theta, y, x=None):
        raise NotImplementedError

    def fit(self, y, x=None) -> tuple[np.ndarray, np.ndarray]:
        """Batched MLE: returns ``(theta_hat, converged)`` over leading axes."""
        return self._numeric_fit(y, x)

    def simulate(self, theta, n: int, rng: np.random.Generator, reps: int, x=None) -> np.ndarray:
        """``reps`` datasets of size ``n`` drawn at ``theta``; shape ``(reps, n)``."""
        raise NotImplementedError

    def log_rl(self, theta, y, x=None) -> tuple[np.ndarray, np.ndarray]:
        """Log relative likelihood at ``theta`` and a per-dataset convergence mask."""
        that, ok = self.fit(y, x)
        lr = self.loglik(theta, y, x) - self.loglik(that, y, x)
        lr = np.where(np.isnan(lr), -np.inf, lr)
        return np.minimum(lr, 0.0), ok

    def size_of(self, y) -> int:
        """Sample size argument for :meth:`simulate` matching dataset ``y``."""
        return np.asarray(y).shape[-1]

    # -- parameter space --------------------------------------------------
    def in_domain(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        if t.shape[-1:] != (self.dim,) or not np.all(np.isfinite(t)):
            return False
        pos = np.array(self.positive or (False,) * self.dim)
        return bool(np.all(t[..., pos] > 0))

    def check_domain(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        if not self.in_domain(t):
            raise DomainError(f"{t} is outside the {self.name} parameter space")
        return t

    def to_free(self, theta) -> np.ndarray:
        return np.asarray(theta, dtype=float)

    def from_free(self, eta) -> np.ndarray:
        return np.asarray(eta, dtype=float)

    def sample_domain(self, rng: np.random.Generator, size: int, around=None) -> np.ndarray:
        """Random points of the domain, spread around ``around`` when given."""
        c = np.zeros(self.dim) if around is None else np.asarray(around, dtype=float)
        pos = np.array(self.positive or (False,) * self.dim)
        out = np.empty((size, self.dim))
        for j in range(self.dim):
            if pos[j]:
                out[:, j] = c[j] * np.exp(rng.uniform(-2, 2, size)) if c[j] > 0 else rng.uniform(0.05, 10, size)
            else:
                out[:, j] = c[j] + rng.uniform(-1, 1, size) * (10 + 2 * abs(c[j]))
        return out

    def obs_information(self, y, x, theta) -> np.ndarray:
        """Observed information in free coordinates (central differences)."""
        eta0 = self.to_free(theta)
        k = eta0.size
        h = 1e-4 * np.maximum(np.abs(eta0), 1.0)

        def f(eta):
            return float(self.loglik(self.from_free(eta), y, x))

        H = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                ei = np.zeros(k); ei[i] = h[i]
                ej = np.zeros(k); ej[j] = h[j]
                val = (f(eta0 + ei + ej) - f(eta0 + ei - ej) - f(eta0 - ei + ej) + f(eta0 - ei - ej)) / (4 * h[i] * h[j])
                H[i, j] = H[j, i] = val
        return -H

    # -- generic optimizer -------------------------------------------------
    def start(self, y, x=None) -> np.ndarray:
        return np.where(np.array(self.positive or (False,) * self.dim), 1.0, 0.0)

    def _numeric_fit(self, y, x=None, init=None):
        y = np.asarray(y, dtype=float)
        batch = y.shape[:-1]
        flat = y.reshape(-1, y.shape[-1])
        pos = np.array(self.positive or (False,) * self.dim)
        out = np.empty((flat.shape[0], self.dim))
        ok = np.empty(flat.shape[0], dtype=bool)

        def unpack(u):
            return np.where(pos, np.exp(u), u)

        for i, yi in enumerate(flat):
            s = np.asarray(self.start(yi, x) if init is None else init, dtype=float)
            u0 = np.where(pos, np.log(np.maximum(s, 1e-12)), s)
            res = optimize.minimize(lambda u: -float(self.loglik(unpack(u), yi, x)), u0,
                                    method="BFGS", options={"gtol": 1e-8, "maxiter": 500})
            out[i] = unpack(res.x)
            ok[i] = bool(res.success) or res.nit < 500
        return out.reshape(batch + (self.dim,)), ok.reshape(batch)


class Normal(Model):
    """``N(mu, sigma^2)`` with ``theta = (mu, sigma)``."""

    name = "normal"
    dim = 2
    param_names = ("mu", "sigma")
    positive = (False, True)
    pivotal = True

    @staticmethod
    def _stats(y):
        y = np.asarray(y, dtype=float)
        ybar = y.mean(axis=-1)
        s2 = np.mean((y - ybar[..., None]) ** 2, axis=-1)
        return y.shape[-1], ybar, s2

    def loglik(self, theta, y, x=None):
        theta = np.asarray(theta, dtype=float)
        mu, sigma = theta[..., 0], theta[..., 1]
        n, ybar, s2 = self._stats(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -n * np.log(sigma) - 0.5 * n * _LOG2PI - 0.5 * n * (s2 + (ybar - mu) ** 2) / sigma**2

    def fit(self, y, x=None):
        _, ybar, s2 = self._stats(y)
        that = np.stack([ybar, np.sqrt(s2)], axis=-1)
        return that, s2 > 0

    def relative_likelihood_closed_form(self, theta, y):
        """Relative likelihood written directly in terms of the MLE."""
        mu, sigma = float(theta[0]), float(theta[1])
        n, ybar, s2 = self._stats(y)
        ratio = s2 / sigma**2
        return ratio ** (n / 2) * np.exp(-n * (ybar - mu) ** 2 / (2 * sigma**2) - n / 2 * (ratio - 1))

    def simulate(self, theta, n, rng, reps, x=None):
        mu, sigma = float(theta[0]), float(theta[1])
        return mu + sigma * rng.standard_normal((reps, n))

    def obs_information(self, y, x, theta):
        n = np.asarray(y).shape[-1]
        _, ybar, s2 = self._stats(y)
        mu, sigma = float(theta[0]), float(theta[1])
        d = ybar - mu
        return np.array([
            [n / sigma**2, 2 * n * d / sigma**3],
            [2 * n * d / sigma**3, -n / sigma**2 + 3 * n * (s2 + d * d) / sigma**4],
        ])

    def start(self, y, x=None):
        return np.array([np.mean(y), np.std(y) or 1.0])


class NormalKnownSigma(Model):
    """``N(mu, sigma^2)`` with ``sigma`` fixed; ``theta = (mu,)``."""

    name = "normal_known_sigma"
    dim = 1
    param_names = ("mu",)
    positive = (False,)
    pivotal = True

    def __init__(self, sigma: float = 1.0):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)

    def loglik(self, theta, y, x=None):
        mu = np.asarray(theta, dtype=float)[..., 0]
        y = np.asarray(y, dtype=float)
        n = y.shape[-1]
        ybar = y.mean(axis=-1)
        ss = np.sum((y - ybar[..., None]) ** 2, axis=-1)
        return -n * math.log(self.sigma) - 0.5 * n * _LOG2PI - 0.5 * (ss + n * (ybar - mu) ** 2) / self.sigma**2

    def fit(self, y, x=None):
        ybar = np.asarray(y, dtype=float).mean(axis=-1)
        return ybar[..., None], np.ones(ybar.shape, dtype=bool)

    def simulate(self, theta, n, rng, reps, x=None):
        return float(theta[0]) + self.sigma * rng.standard_normal((reps, n))

    def obs_information(self, y, x, theta):
        return np.array([[np.asarray(y).shape[-1] / self.sigma**2]])


def _gamma_shape(c, max_iter: int = 100, tol: float = 1e-12):
    """Solve ``log k - digamma(k) = c`` for ``k > 0`` (vectorized Newton in log k)."""
    c = np.asarray(c, dtype=float)
    ok = np.isfinite(c) & (c > 0)
    cs = np.where(ok, c, 1.0)
    k = (3.0 - cs + np.sqrt((cs - 3.0) ** 2 + 24.0 * cs)) / (12.0 * cs)
    u = np.log(k)
    for _ in range(max_iter):
        k = np.exp(u)
        f = np.log(k) - special.digamma(k) - cs
        fp = 1.0 - k * special.polygamma(1, k)  # d f / d log k
        step = f / fp
        u = u - step
        if np.all(np.abs(step[ok]) < tol) if ok.any() else True:
            break
    k = np.exp(u)
    resid = np.abs(np.log(k) - special.digamma(k) - cs)
    return k, ok & (resid < 1e-8 * np.maximum(1.0, cs))


class Gamma(Model):
    """Gamma distribution with ``theta = (shape, scale)``."""

    name = "gamma"
    dim = 2
    param_names = ("shape", "scale")
    positive = (True, True)

    @staticmethod
    def _stats(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return y.shape[-1], y.mean(axis=-1), np.log(y).mean(axis=-1)

    def loglik(self, theta, y, x=None):
        theta = np.asarray(theta, dtype=float)
        k, s = theta[..., 0], theta[..., 1]
        n, m, ml = self._stats(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            return n * ((k - 1) * ml - m / s - k * np.log(s) - special.gammaln(k))

    def fit(self, y, x=None):
        _, m, ml = self._stats(y)
        k, ok = _gamma_shape(np.log(m) - ml)
        return np.stack([k, m / k], axis=-1), ok

    def profile_mean(self, phi, y):
        """Constrained MLE with ``shape * scale = phi`` (batched over ``y``)."""
        _, m, ml = self._stats(y)
        phi = np.asarray(phi, dtype=float)
        k, ok = _gamma_shape(np.log(phi) + m / phi - 1.0 - ml)
        return np.stack([k, phi / k], axis=-1), ok

    def simulate(self, theta, n, rng, reps, x=None):
        return rng.gamma(float(theta[0]), float(theta[1]), size=(reps, n))

    def obs_information(self, y, x, theta):
        n, m, _ = self._stats(y)
        k, s = float(theta[0]), float(theta[1])
        return np.array([
            [n * special.polygamma(1, k), n / s],
            [n / s, -n * k / s**2 + 2 * n * m / s**3],
        ])

    def sample_domain(self, rng, size, around=None):
        c = np.array([1.0, 1.0]) if around is None else np.asarray(around, dtype=float)
        return c * np.exp(rng.uniform(-1.5, 1.5, (size, 2)))


class LogisticBinomial(Model):
    """``Y_i ~ Bin(trials, F(theta1 + theta2 x_i))`` with logistic ``F``."""

    name = "logistic_binomial"
    dim = 2
    param_names = ("intercept", "slope")
    positive = (False, False)

    def __init__(self, trials: int = 6, max_iter: int = 500):
        if trials < 1:
            raise ValueError("trials must be >= 1")
        self.trials = int(trials)
        self.max_iter = max_iter

    def loglik(self, theta, y, x=None):
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        eta = theta[..., 0, None] + theta[..., 1, None] * x
        m = self.trials
        const = special.gammaln(m + 1) - special.gammaln(y + 1) - special.gammaln(m - y + 1)
        return np.sum(const + y * eta - m * np.logaddexp(0.0, eta), axis=-1)

    def fit(self, y, x=None):
        y = np.asarray(y, dtype=float)
        batch = y.shape[:-1]
        Y = y.reshape(-1, y.shape[-1])
        xc = x - x.mean()
        sx = xc.std() or 1.0
        X = np.stack([np.ones_like(xc), xc / sx], axis=-1)  # (n, 2)
        m = self.trials
        beta = np.zeros((Y.shape[0], 2))
        pbar = np.clip(Y.mean(axis=1) / m, 1e-3, 1 - 1e-3)
        beta[:, 0] = np.log(pbar / (1 - pbar))
        done = np.zeros(Y.shape[0], dtype=bool)
        for _ in range(self.max_iter):
            eta = beta @ X.T
            p = special.expit(eta)
            grad = (Y - m * p) @ X
            w = m * p * (1 - p)
            H = np.einsum("bi,ij,ik->bjk", w, X, X) + 1e-12 * np.eye(2)
            step = np.linalg.solve(H, grad[..., None])[..., 0]
            step = np.where(done[:, None], 0.0, step)
            # cap steps so diverging (separated) fits stay finite
            scale = np.minimum(1.0, 10.0 / np.maximum(np.abs(step).max(axis=1), 1e-300))
            beta = beta + step * scale[:, None]
            # diverging fits (separated data) are flagged below; stop iterating them
            done |= (np.abs(step).max(axis=1) < 1e-10) | (np.abs(beta).max(axis=1) >= 50)
            if done.all():
                break
        eta = beta @ X.T
        grad = (Y - m * special.expit(eta)) @ X
        ok = done & (np.abs(grad).max(axis=1) <= 1e-6 * max(1.0, Y.shape[1]))
        ok &= np.abs(beta).max(axis=1) < 50
        slope = beta[:, 1] / sx
        intercept = beta[:, 0] - slope * x.mean()
        that = np.stack([intercept, slope], axis=-1)
        return that.reshape(batch + (2,)), ok.reshape(batch)

    def fit_affine(self, y, x, theta0, V, lam0=None, max_iter: int = 200):
        """Batched MLE over ``theta0 + V lam``; returns ``(theta, loglik, ok)``.

        The log-likelihood is concave in ``lam``; damped Newton (step halving
        until the likelihood does not decrease) converges from any start.
        """
        y = np.asarray(y, dtype=float)
        batch = y.shape[:-1]
        Y = y.reshape(-1, y.shape[-1])
        X = np.stack([np.ones_like(x), x], axis=-1)
        V = np.asarray(V, dtype=float).reshape(2, -1)
        a = X @ np.asarray(theta0, dtype=float)  # (n,)
        B = X @ V  # (n, k)
        k = B.shape[1]
        m = self.trials

        def ll(lam):
            eta = a + lam @ B.T
            return np.sum(Y * eta - m * np.logaddexp(0.0, eta), axis=-1)

        lam = np.zeros((Y.shape[0], k))
        if lam0 is not None:
            lam += np.asarray(lam0, dtype=float).reshape(-1, k)
        cur = ll(lam)
        done = np.zeros(Y.shape[0], dtype=bool)
        for _ in range(max_iter):
            p = special.expit(a + lam @ B.T)
            grad = (Y - m * p) @ B
            w = m * p * (1 - p)
            H = np.einsum("bi,ij,ik->bjk", w, B, B) + 1e-12 * np.eye(k)
            step = np.linalg.solve(H, grad[..., None])[..., 0]
            step = np.where(done[:, None], 0.0, step)
            t = np.ones(Y.shape[0])
            for _ in range(40):
                trial = ll(lam + t[:, None] * step)
                bad = ~(trial >= cur - 1e-12 * np.abs(cur))
                if not bad.any():
                    break
                t = np.where(bad, 0.5 * t, t)
            lam = lam + t[:, None] * step
            new = ll(lam)
            # a vanishing gain also ends rows whose maximum sits at infinity
            done |= (np.abs(t[:, None] * step).max(axis=1) < 1e-10) | (new - cur <= 1e-12 * np.maximum(1.0, np.abs(cur)))
            cur = new
            if done.all():
                break
        theta = np.asarray(theta0, dtype=float) + lam @ V.T
        ok = done & np.all(np.abs(theta) < 1e6, axis=-1)
        return theta.reshape(batch + (2,)), self.loglik(theta, Y, x).reshape(batch), ok.reshape(batch)

    def simulate(self, theta, n, rng, reps, x=None):
        p = special.expit(float(theta[0]) + float(theta[1]) * np.asarray(x))
        return rng.binomial(self.trials, p, size=(reps, p.size)).astype(float)

    def obs_information(self, y, x, theta):
        p = special.expit(theta[0] + theta[1] * x)
        w = self.trials * p * (1 - p)
        X = np.stack([np.ones_like(x), x], axis=-1)
        return X.T @ (w[:, None] * X)

    def start(self, y, x=None):
        return np.zeros(2)


class Multinomial(Model):
    """``Mult_K(n, theta)`` for a count vector; ``theta`` lies on the simplex.

    Free coordinates are the first ``K - 1`` probabilities.
    """

    name = "multinomial"
    positive = ()

    def __init__(self, K: int):
        if K < 2:
            raise ValueError("K must be >= 2")
        self.K = int(K)
        self.dim = self.K
        self.param_names = tuple(f"p{k + 1}" for k in range(self.K))

    @property
    def n_free(self) -> int:
        return self.K - 1

    def loglik(self, theta, y, x=None):
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        n = y.sum(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            return special.gammaln(n + 1) - special.gammaln(y + 1).sum(axis=-1) + special.xlogy(y, theta).sum(axis=-1)

    def fit(self, y, x=None):
        y = np.asarray(y, dtype=float)
        n = y.sum(axis=-1, keepdims=True)
        return y / n, np.ones(y.shape[:-1], dtype=bool)

    def log_rl(self, theta, y, x=None):
        # product of (n theta_k / z_k)^{z_k} with 0^0 = 1
        theta = np.asarray(theta, dtype=float)
        y = np.asarray(y, dtype=float)
        n = y.sum(axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = special.xlogy(y, n * theta) - special.xlogy(y, y)
        lr = np.minimum(terms.sum(axis=-1), 0.0)
        return np.where(np.isnan(lr), -np.inf, lr), np.ones(y.shape[:-1], dtype=bool)

    def size_of(self, y) -> int:
        return int(round(float(np.sum(y))))

    def simulate(self, theta, n, rng, reps, x=None):
        p = np.clip(np.asarray(theta, dtype=float), 0.0, None)
        return rng.multinomial(int(n), p / p.sum(), size=reps).astype(float)

    def in_domain(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        return bool(t.shape[-1:] == (self.K,) and np.all(np.isfinite(t)) and np.all(t >= 0)
                    and np.all(np.abs(t.sum(axis=-1) - 1.0) <= 1e-9))

    def to_free(self, theta):
        return np.asarray(theta, dtype=float)[..., :-1]

    def from_free(self, eta):
        eta = np.asarray(eta, dtype=float)
        return np.concatenate([eta, 1.0 - eta.sum(axis=-1, keepdims=True)], axis=-1)

    def obs_information(self, y, x, theta):
        y = np.asarray(y, dtype=float)
        t = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(y[:-1] > 0, y[:-1] / t[:-1] ** 2, 0.0)
            last = y[-1] / t[-1] ** 2 if y[-1] > 0 else 0.0
        return np.diag(d) + last

    def sample_domain(self, rng, size, around=None):
        return rng.dirichlet(np.ones(self.K), size=size)


class LinearRegression(Model):
    """``Y_i ~ N(beta0 + beta1 x_i, sigma2)`` with ``theta = (beta0, beta1, sigma2)``."""

    name = "linear_regression"
    dim = 3
    param_names = ("beta0", "beta1", "sigma2")
    positive = (False, False, True)
    pivotal = True

    @staticmethod
    def _design(x):
        return np.stack([np.ones_like(x), x], axis=-1)

    def rss(self, beta, y, x):
        beta = np.asarray(beta, dtype=float)
        resid = np.asarray(y) - (beta[..., 0, None] + beta[..., 1, None] * x)
        return np.sum(resid**2, axis=-1)

    def loglik(self, theta, y, x=None):
        theta = np.asarray(theta, dtype=float)
        n = np.asarray(y).shape[-1]
        s2 = theta[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            return -0.5 * n * (_LOG2PI + np.log(s2)) - 0.5 * self.rss(theta[..., :2], y, x) / s2

    def ols(self, y, x):
        X = self._design(x)
        coef = np.linalg.solve(X.T @ X, X.T @ np.moveaxis(np.asarray(y, dtype=float), -1, 0).reshape(len(x), -1))
        return coef.T.reshape(np.asarray(y).shape[:-1] + (2,))

    def fit(self, y, x=None):
        beta = self.ols(y, x)
        s2 = self.rss(beta, y, x) / np.asarray(y).shape[-1]
        return np.concatenate([beta, s2[..., None]], axis=-1), s2 > 0

    def simulate(self, theta, n, rng, reps, x=None):
        x = np.asarray(x)
        mean = theta[0] + theta[1] * x
        return mean + math.sqrt(theta[2]) * rng.standard_normal((reps, x.size))

    def obs_information(self, y, x, theta):
        X = self._design(x)
        n = X.shape[0]
        s2 = float(theta[2])
        r = self.rss(theta[:2], y, x)
        resid = np.asarray(y) - X @ theta[:2]
        J = np.zeros((3, 3))
        J[:2, :2] = X.T @ X / s2
        J[:2, 2] = J[2, :2] = X.T @ resid / s2**2
        J[2, 2] = -n / (2 * s2**2) + r / s2**3
        return J


def builtin_models() -> dict[str, Callable[..., Model]]:
    """Factories for the built-in models, keyed by id."""
    return {
        "normal": Normal,
        "normal_known_sigma": NormalKnownSigma,
        "gamma": Gamma,
        "logistic_binomial": LogisticBinomial,
        "multinomial": Multinomial,
        "linear_regression": LinearRegression,
    }


def make_model(model_id: str, **hyper) -> Model:
    try:
        return builtin_models()[model_id](**hyper)
    except KeyError:
        raise ValueError(f"unknown model '{model_id}'") from None


def mle(model: Model, z: Dataset, init=None) -> tuple[np.ndarray, MLEReport]:
    """Maximum likelihood estimate for one dataset, with a convergence report.

    ``init`` is only used by models without a dedicated solver.
    """
    if isinstance(model, Normal) and np.ptp(z.y) == 0:
        raise BoundaryMLEError("all observations are equal: sigma-hat is 0 (boundary)")
    if init is not None and type(model).fit is Model.fit:
        that, ok = model._numeric_fit(z.y, z.x, init=init)
    else:
        that, ok = model.fit(z.y, z.x)
    that = np.asarray(that, dtype=float)
    if not bool(ok) or not np.all(np.isfinite(that)):
        if isinstance(model, LogisticBinomial):
            raise BoundaryMLEError("logistic MLE diverged (separation); the MLE is on the boundary")
        raise ConvergenceError(f"{model.name} MLE did not converge")
    method = {
        Normal: "closed-form",
        NormalKnownSigma: "closed-form",
        Multinomial: "closed-form",
        LinearRegression: "closed-form",
        Gamma: "newton-digamma",
        LogisticBinomial: "newton",
    }.get(type(model), "bfgs")
    return that, MLEReport(True, method, grad_norm=_grad_norm(model, z, that))


def _grad_norm(model: Model, z: Dataset, theta) -> float:
    eta = model.to_free(theta)
    g = np.empty(eta.size)
    for i in range(eta.size):
        h = 1e-6 * max(1.0, abs(eta[i]))
        e = np.zeros(eta.size); e[i] = h
        g[i] = (model.loglik(model.from_free(eta + e), z.y, z.x) - model.loglik(model.from_free(eta - e), z.y, z.x)) / (2 * h)
    return float(np.linalg.norm(g * np.maximum(1.0, np.abs(eta))) / max(1, z.n))


def relative_likelihood(model: Model, z: Dataset, theta) -> float:
    """``L_z(theta) / sup L_z``, in [0, 1]."""
    t = model.check_domain(theta)
    mle(model, z)
    lr, _ = model.log_rl(t, z.y, z.x)
    return float(np.exp(lr))


# -- datasets ----------------------------------------------------------------
def read_dataset(path, label: str | None = None) -> Dataset:
    """Read a CSV with a header: one column -> responses, two -> (x, y)."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    if not body:
        raise ValueError(f"{path} has no records")
    if any(len(r) != len(header) for r in body):
        raise ValueError(f"{path}: ragged rows")
    cols = np.array(body, dtype=float).T
    name = label or path.stem
    if len(header) == 1:
        return Dataset(cols[0], label=name)
    if len(header) == 2:
        return Dataset(cols[1], x=cols[0], label=name)
    raise ValueError(f"{path}: expected 1 or 2 columns, found {len(header)}")


FIXTURES = {"darwin": "darwin.csv", "orings": "orings.csv", "multinomial_agresti": "multinomial_agresti.csv"}


def fixture(name: str) -> Dataset:
    """Load a shipped dataset fixture by name."""
    fname = FIXTURES[name]
    with resources.as_file(resources.files("possim") / "data" / fname) as p:
        ds = read_dataset(p, label=name)
    if name == "darwin":
        ds.units = "eighths of an inch"
    elif name == "orings":
        ds.units = "deg F; failures out of 6"
    return ds


AGRESTI_BLOCKS = ((0, 1, 2), (3, 4, 5), (6, 7, 8))


def check_fixture(name: str, z: Dataset) -> None:
    """Raise :class:`FixtureMismatchError` unless ``z`` reproduces the cited statistics."""
    if name == "darwin":
        that, _ = mle(Normal(), z)
        if np.max(np.abs(that - [20.93, 36.46])) > 0.01:
            raise FixtureMismatchError(f"darwin MLE {that} != (20.93, 36.46)")
    elif name == "orings":
        that, _ = mle(LogisticBinomial(6), z)
        t50 = -that[0] / that[1]
        if abs(t50 - 53.94) > 0.05:
            raise FixtureMismatchError(f"o-rings 50% temperature {t50:.3f} != 53.94")
    elif name == "multinomial_agresti":
        that, _ = mle(Multinomial(z.n), z)
        blocks = np.array([that[list(b)].sum() for b in AGRESTI_BLOCKS])
        if np.max(np.abs(blocks - [0.15, 0.6125, 0.2375])) > 1e-12:
            raise FixtureMismatchError(f"block-sum MLE {blocks} != (0.1500, 0.6125, 0.2375)")
