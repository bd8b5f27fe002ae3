"""Brute-force reference computations used to check the iterative solvers.

Nothing here shares code with the message-passing paths it is compared with.
"""

from __future__ import annotations

import itertools

import numpy as np


def exhaustive_posterior_mean(y, S, points, gamma: float, sigma2: float) -> np.ndarray:
    """Exact MMSE estimate of x from y = S x + CN(0, sigma2 I).

    Every entry of x is 0 with probability 1 - gamma, otherwise uniform over
    ``points``. Enumerates all (L+1)^K hypotheses.
    """
    y = np.asarray(y)
    K = S.shape[1]
    L = len(points)
    alphabet = np.concatenate([[0.0], np.asarray(points)])
    log_prior_sym = np.concatenate([[np.log1p(-gamma)], np.full(L, np.log(gamma / L))])
    hyps = np.array(list(itertools.product(range(L + 1), repeat=K)))
    X = alphabet[hyps]                                   # H x K
    log_prior = log_prior_sym[hyps].sum(axis=1)
    resid = y[None, :] - X @ S.T
    log_post = log_prior - np.sum(np.abs(resid) ** 2, axis=1) / sigma2
    w = np.exp(log_post - log_post.max())
    w /= w.sum()
    return w @ X


def exhaustive_posterior_means(Y, S, points, gamma: float, sigma2: float) -> np.ndarray:
    """Column-by-column exact posterior means for an M x T observation."""
    return np.stack([exhaustive_posterior_mean(Y[:, t], S, points, gamma, sigma2)
                     for t in range(Y.shape[1])], axis=1)


def least_squares(Phi, R) -> np.ndarray:
    """Unregularized least squares via numpy's lstsq."""
    return np.linalg.lstsq(Phi, R, rcond=None)[0]
