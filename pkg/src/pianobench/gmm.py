"""Gaussian mixtures fitted by EM and the optimal-transport distance between them."""

import logging
import typing as t

import numpy as np
import ot
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.special import logsumexp

from .errors import DimensionMismatch, NotPSD, TooFewSamples
from .metrics import frechet_distance
from .types import GaussianStats, GMMModel

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)
_EPS = 10 * np.finfo(float).eps


def _kmeans_plus_plus(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centres = [X[rng.integers(n)]]
    d2 = ((X - centres[0]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        index = rng.integers(n) if total <= 0 else rng.choice(n, p=d2 / total)
        centres.append(X[index])
        d2 = np.minimum(d2, ((X - X[index]) ** 2).sum(axis=1))
    return np.stack(centres)


def _log_gaussians(
    X: np.ndarray, means: np.ndarray, covariances: np.ndarray
) -> np.ndarray:
    """(n, K) log densities of every sample under every component."""
    n, d = X.shape
    out = np.empty((n, len(means)))
    for k, (mu, C) in enumerate(zip(means, covariances)):
        try:
            L = cholesky(C, lower=True)
        except LinAlgError as e:
            raise NotPSD(f"covariance of component {k} is singular") from e
        z = solve_triangular(L, (X - mu).T, lower=True)
        logdet = 2.0 * np.log(np.diag(L)).sum()
        out[:, k] = -0.5 * (d * LOG_2PI + logdet + (z**2).sum(axis=0))
    return out


def _e_step(
    X: np.ndarray, weights: np.ndarray, means: np.ndarray, covariances: np.ndarray
) -> tuple[float, np.ndarray]:
    weighted = _log_gaussians(X, means, covariances) + np.log(weights)
    per_sample = logsumexp(weighted, axis=1)
    return float(per_sample.mean()), np.exp(weighted - per_sample[:, None])


def _m_step(
    X: np.ndarray, resp: np.ndarray, reg_covar: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    d = X.shape[1]
    nk = resp.sum(axis=0) + _EPS
    means = resp.T @ X / nk[:, None]
    covariances = np.empty((len(nk), d, d))
    for k in range(len(nk)):
        diff = X - means[k]
        covariances[k] = (resp[:, k] * diff.T) @ diff / nk[k] + reg_covar * np.eye(d)
    return nk / nk.sum(), means, covariances


def fit_gmm(
    samples: np.ndarray,
    K: int = 8,
    seed: int = 42,
    max_iter: int = 200,
    tol: float = 1e-6,
    reg_covar: float = 1e-6,
) -> GMMModel:
    """
    Full-covariance EM. Responsibilities start from a hard assignment to seeded
    k-means++ centres. The trace holds the mean log-likelihood of every E-step.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    if len(X) < K:
        raise TooFewSamples(f"{len(X)} samples for {K} components")

    rng = np.random.default_rng(seed)
    centres = _kmeans_plus_plus(X, K, rng)
    labels = ((X[:, None, :] - centres[None]) ** 2).sum(axis=-1).argmin(axis=1)
    resp = np.eye(K)[labels]
    weights, means, covariances = _m_step(X, resp, reg_covar)

    trace: list[float] = []
    converged = False
    for _ in range(max_iter):
        log_likelihood, resp = _e_step(X, weights, means, covariances)
        trace.append(log_likelihood)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break
        weights, means, covariances = _m_step(X, resp, reg_covar)

    if not converged:
        logger.warning("EM stopped after %d iterations without converging", max_iter)
    return GMMModel(
        weights=weights,
        means=means,
        covariances=covariances,
        log_likelihood_trace=tuple(trace),
        n_iter=len(trace),
        converged=converged,
    )


def mean_log_likelihood(model: GMMModel, samples: np.ndarray) -> float:
    X = np.asarray(samples, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"model of dim {model.dim}, samples {X.shape}")
    return _e_step(X, model.weights, model.means, model.covariances)[0]


def gaussian_w2_squared(a: GaussianStats, b: GaussianStats) -> float:
    """Squared 2-Wasserstein distance between two Gaussians."""
    return frechet_distance(a, b)


def gmm_w2(a: GMMModel, b: GMMModel) -> float:
    """
    Mixture Wasserstein distance: exact discrete transport between the component
    weights with pairwise Gaussian W2 costs.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"mixtures of dim {a.dim} and {b.dim}")
    cost = np.array(
        [[gaussian_w2_squared(ca, cb) for cb in b.components] for ca in a.components]
    )
    value = ot.emd2(a.weights / a.weights.sum(), b.weights / b.weights.sum(), cost)
    return float(np.sqrt(max(float(value), 0.0)))


def wgd(
    pred_gestures: np.ndarray,
    gt_gestures: np.ndarray,
    K: int = 8,
    seed: int = 42,
    **fit_kwargs: t.Any,
) -> float:
    """Mixture Wasserstein distance between GMM fits of per-frame pose vectors."""
    pred = fit_gmm(pred_gestures, K, seed, **fit_kwargs)
    gt = fit_gmm(gt_gestures, K, seed, **fit_kwargs)
    return gmm_w2(pred, gt)
