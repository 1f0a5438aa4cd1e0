"""Losses with analytic gradients, the KL regularizer and reparameterized sampling."""

from __future__ import annotations

import numpy as np

EPS = 1e-7


def loss_bce(prediction: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Binary cross-entropy: sum over features, mean over the batch.

    ``prediction`` is clamped to [EPS, 1 - EPS]. Returns the loss and its gradient
    with respect to ``prediction``.
    """
    n = prediction.shape[0]
    p = np.clip(prediction, EPS, 1.0 - EPS)
    t = target
    loss = -np.sum(t * np.log(p) + (1.0 - t) * np.log1p(-p)) / n
    grad = (p - t) / (p * (1.0 - p)) / n
    return float(loss), grad


def loss_cce(prediction: np.ndarray, one_hot_target: np.ndarray) -> tuple[float, np.ndarray]:
    """Categorical cross-entropy on per-class scores renormalized to sum to one.

    The classifier's sigmoid outputs are not a distribution; they are divided by
    their row sum first. Gradient is with respect to the raw scores.
    """
    n = prediction.shape[0]
    s = np.clip(prediction, EPS, None)
    total = s.sum(axis=1, keepdims=True)
    p = s / total
    t = one_hot_target
    loss = -np.sum(t * np.log(np.clip(p, EPS, 1.0))) / n
    # d/ds_j of -sum_k t_k log(s_k / S) = -t_j / s_j + sum_k t_k / S
    grad = (-t / s + t.sum(axis=1, keepdims=True) / total) / n
    return float(loss), grad


def kl_standard_normal(mu: np.ndarray, logvar: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """KL(N(mu, exp(logvar)) || N(0, I)), mean over the batch, with gradients."""
    mu = np.atleast_2d(mu)
    logvar = np.atleast_2d(logvar)
    n = mu.shape[0]
    var = np.exp(logvar)
    kl = -0.5 * np.sum(1.0 + logvar - mu ** 2 - var) / n
    return float(kl), mu / n, 0.5 * (var - 1.0) / n


def reparameterize(mu: np.ndarray, logvar: np.ndarray,
                   seed: int | np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``mu + exp(logvar / 2) * eps``; returns (sample, eps).

    Gradients reach ``mu`` directly and ``logvar`` through ``0.5 * eps * std``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    eps = rng.standard_normal(np.shape(mu))
    return mu + np.exp(0.5 * logvar) * eps, eps
