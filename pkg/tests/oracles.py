"""Independent reference values computed without the library under test."""

from __future__ import annotations

import itertools

import numpy as np
from scipy import stats

DARWIN = np.array([49, -67, 8, 16, 6, 23, 28, 41, 14, 29, 56, 24, 75, 60, -48], dtype=float)
AGRESTI = np.array([10, 8, 6, 34, 38, 26, 8, 15, 15], dtype=float)


def darwin_t_pvalue(mu0: float = 0.0) -> float:
    """Two-sided one-sample t-test p-value."""
    return float(stats.ttest_1samp(DARWIN, mu0).pvalue)


def normal_mle(y):
    y = np.asarray(y, dtype=float)
    return np.array([y.mean(), y.std(ddof=0)])


def gaussian_possibility(y, mean, cov) -> float:
    d = np.atleast_1d(np.asarray(y, dtype=float) - mean)
    q = float(d @ np.linalg.solve(np.atleast_2d(cov), d))
    return float(stats.chi2.sf(q, np.atleast_1d(mean).size))


def known_sigma_contour(ybar, mu, sigma, n) -> float:
    """Exact contour of the normal mean with known sigma: two-sided z p-value."""
    zstat = abs(ybar - mu) * np.sqrt(n) / sigma
    return float(2 * stats.norm.sf(zstat))


def transducer_by_permutation(bag, candidate, rho) -> float:
    """Average over all (n+1)! orderings of the augmented bag."""
    aug = list(bag) + [candidate]
    target = rho(np.array(aug[:-1]), np.array(aug[-1]))
    hits = total = 0
    for perm in itertools.permutations(range(len(aug))):
        last = perm[-1]
        rest = np.array([aug[i] for i in perm[:-1]])
        hits += rho(rest, np.array(aug[last])) <= target
        total += 1
    return hits / total
