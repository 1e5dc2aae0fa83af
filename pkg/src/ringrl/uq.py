"""Bayesian linear-regression output head with Thompson sampling.

One independent conjugate Gaussian posterior per action over the output
weights ``w_a``, with an isotropic prior ``N(0, prior_variance * I)`` and known
observation noise. Action statistics are Monte-Carlo estimates over sampled
weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

JITTER = 1e-8


@dataclass(frozen=True)
class BlrPrior:
    weight_dim: int
    prior_variance: float = 1.0
    noise_variance: float = 1.0

    def __post_init__(self):
        if self.weight_dim < 1:
            raise ValueError(f"weight_dim must be positive, got {self.weight_dim}")
        if not (self.prior_variance > 0 and self.noise_variance > 0):
            raise ValueError("prior and noise variances must be strictly positive")


@dataclass
class BlrPosterior:
    means: np.ndarray        # (A, F)
    covariances: np.ndarray  # (A, F, F)
    _chol: list = field(default=None, init=False, repr=False)

    @classmethod
    def from_prior(cls, prior: BlrPrior, n_actions: int) -> "BlrPosterior":
        f = prior.weight_dim
        return cls(np.zeros((n_actions, f)),
                   np.tile(prior.prior_variance * np.eye(f), (n_actions, 1, 1)))

    @property
    def n_actions(self) -> int:
        return self.means.shape[0]

    def cholesky(self, action: int) -> np.ndarray:
        if self._chol is None:
            self._chol = [None] * self.n_actions
        if self._chol[action] is None:
            self._chol[action] = _factor(self.covariances[action])
        return self._chol[action]


@dataclass
class ActionStats:
    mu: np.ndarray
    sigma: np.ndarray


def _factor(cov: np.ndarray) -> np.ndarray:
    if not cov.any():
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"covariance is not positive definite: {exc}") from None


def _posterior_cov(precision: np.ndarray) -> np.ndarray:
    eye = np.eye(precision.shape[0])
    for jitter in (0.0, JITTER):
        try:
            chol = np.linalg.cholesky(precision + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        inv_chol = np.linalg.solve(chol, eye)
        cov = inv_chol.T @ inv_chol
        cov = 0.5 * (cov + cov.T)
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            continue
        return cov
    raise FloatingPointError("posterior covariance is not SPD even after jitter")


def blr_update(prior: BlrPrior, features: Sequence, targets: Sequence[float],
               n_actions: int) -> BlrPosterior:
    """Batch conjugate update from ``(action, phi)`` pairs and scalar targets."""
    if len(features) != len(targets):
        raise ValueError(f"{len(features)} feature rows but {len(targets)} targets")
    post = BlrPosterior.from_prior(prior, n_actions)
    if not len(features):
        return post
    actions = np.array([a for a, _ in features], dtype=int)
    X = np.array([np.asarray(phi, dtype=float) for _, phi in features])
    y = np.asarray(targets, dtype=float)
    if X.shape[1] != prior.weight_dim:
        raise ValueError(f"feature length {X.shape[1]} != weight_dim {prior.weight_dim}")
    if actions.min() < 0 or actions.max() >= n_actions:
        raise ValueError("action index out of range")
    return blr_update_arrays(prior, actions, X, y, n_actions)


def blr_update_arrays(prior: BlrPrior, actions: np.ndarray, X: np.ndarray, y: np.ndarray,
                      n_actions: int) -> BlrPosterior:
    post = BlrPosterior.from_prior(prior, n_actions)
    eye = np.eye(prior.weight_dim) / prior.prior_variance
    for a in range(n_actions):
        rows = actions == a
        if not rows.any():
            continue
        Xa, ya = X[rows], y[rows]
        cov = _posterior_cov(Xa.T @ Xa / prior.noise_variance + eye)
        post.covariances[a] = cov
        post.means[a] = cov @ (Xa.T @ ya) / prior.noise_variance
    return post


def thompson_sample(posterior: BlrPosterior, action: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(posterior.means.shape[1])
    return posterior.means[action] + posterior.cholesky(action) @ z


def action_stats(posterior: BlrPosterior, phi, n_samples: int,
                 rng: np.random.Generator) -> ActionStats:
    if n_samples < 2:
        raise ValueError(f"need at least 2 samples for a variance, got {n_samples}")
    phi = np.asarray(phi, dtype=float)
    n_actions, f = posterior.means.shape
    z = rng.standard_normal((n_actions, n_samples, f))
    mu = np.empty(n_actions)
    var = np.empty(n_actions)
    for a in range(n_actions):
        chol = posterior.cholesky(a)
        if not chol.any():
            mu[a], var[a] = posterior.means[a] @ phi, 0.0
            continue
        w = posterior.means[a] + z[a] @ chol.T   # (I, F) sampled weights
        q = w @ phi
        mu[a] = q.mean()
        var[a] = q.var(ddof=1)
    return ActionStats(mu=mu, sigma=np.sqrt(var))


def q_value(posterior: BlrPosterior, action: int, phi) -> float:
    return float(posterior.means[action] @ np.asarray(phi, dtype=float))
