"""Linear-regression federated learning: data, local gradients, FedAvg, error."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ehfl.errors import ConfigError


@dataclass(frozen=True)
class GlobalModel:
    """Training weights ``w`` and the ground-truth weights they chase."""

    w: np.ndarray
    true_w: np.ndarray

    def __post_init__(self):
        if self.w.ndim != 1 or self.w.shape != self.true_w.shape or self.w.size < 1:
            raise ValueError("w and true_w must be 1-D vectors of equal length >= 1")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.true_w))):
            raise ValueError("model entries must be finite")

    @property
    def L(self) -> int:
        return self.w.size


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: float
    owner: int


@dataclass(frozen=True)
class LocalUpdate:
    g: np.ndarray
    norm: float
    owner: int

    @classmethod
    def from_gradient(cls, g: np.ndarray, owner: int) -> "LocalUpdate":
        return cls(g=g, norm=float(np.linalg.norm(g)), owner=owner)


def draw_centers(K: int, L: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Per-user feature means ``v_k ~ N(0, beta * I)``; ``beta = 0`` gives IID users."""
    return rng.standard_normal((K, L)) * np.sqrt(beta)


def draw_features(centers: np.ndarray, dataset_size: int, rng: np.random.Generator) -> np.ndarray:
    """Features ``x ~ N(v_k, I)``, shaped ``(K, dataset_size, L)``."""
    K, L = centers.shape
    return centers[:, None, :] + rng.standard_normal((K, dataset_size, L))


def population_arrays(K: int, L: int, beta: float, rng: np.random.Generator, dataset_size: int = 1):
    """Array form of :func:`generate_population`: ``(true_w, centers, X, y)``."""
    true_w = rng.standard_normal(L)
    centers = draw_centers(K, L, beta, rng)
    X = draw_features(centers, dataset_size, rng)
    return true_w, centers, X, X @ true_w


def generate_population(
    K: int,
    L: int,
    beta: float,
    rng: np.random.Generator,
    dataset_size: int = 1,
) -> tuple[list[Sample], GlobalModel]:
    """Draw the non-IID regression population.

    The true weights are drawn first, then user centers, then features, all
    from ``rng``; labels are noiseless, ``y = x @ true_w``. Training weights
    start at zero.

    Returns:
        ``K * dataset_size`` samples ordered by owner, and the model.
    """
    if K < 1 or L < 1 or dataset_size < 1:
        raise ConfigError(f"K, L and dataset_size must be >= 1 (got K={K}, L={L}, dataset_size={dataset_size})")
    if not beta >= 0:
        raise ConfigError(f"beta must be >= 0 (got {beta})")
    true_w, _, X, y = population_arrays(K, L, beta, rng, dataset_size)
    samples = [
        Sample(x=X[k, i], y=float(y[k, i]), owner=k)
        for k in range(K)
        for i in range(dataset_size)
    ]
    return samples, GlobalModel(w=np.zeros(L), true_w=true_w)


def stack_samples(samples: Sequence[Sample], K: int) -> tuple[np.ndarray, np.ndarray]:
    """Pack samples into ``X`` of shape ``(K, D, L)`` and ``y`` of shape ``(K, D)``.

    Every user must own the same number of samples.
    """
    per_user: list[list[Sample]] = [[] for _ in range(K)]
    for s in samples:
        per_user[s.owner].append(s)
    D = len(per_user[0])
    if any(len(p) != D for p in per_user):
        raise ConfigError("every user must hold the same number of samples")
    X = np.array([[s.x for s in p] for p in per_user])
    y = np.array([[s.y for s in p] for p in per_user])
    return X, y


def local_gradient(w: np.ndarray, s: Sample) -> LocalUpdate:
    """Gradient of ``0.5 * (x @ w - y)**2`` at ``w``."""
    if w.shape != s.x.shape:
        raise ValueError(f"dimension mismatch: w has shape {w.shape}, x has shape {s.x.shape}")
    residual = float(s.x @ w) - s.y
    return LocalUpdate.from_gradient(residual * s.x, s.owner)


def batch_gradients(w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Local gradients for every user at once, averaged over each user's samples.

    ``X`` is ``(K, D, L)`` and ``y`` is ``(K, D)``; returns ``(K, L)``.
    """
    residual = X @ w - y
    return np.einsum("kd,kdl->kl", residual, X) / X.shape[1]


def aggregate(
    w: np.ndarray,
    updates: Sequence[LocalUpdate],
    mu: float,
    weights: Sequence[float] | np.ndarray,
    renormalize: bool = False,
) -> np.ndarray:
    """FedAvg step over the received updates.

    ``w' = w - mu * sum_k d_k g_k`` with the static weights ``d_k``; users whose
    update did not arrive contribute nothing. With ``renormalize`` the received
    weights are rescaled to sum to one.
    """
    if not updates:
        return w.copy()
    d = np.array([weights[u.owner] for u in updates], dtype=float)
    if renormalize:
        d = d / d.sum()
    G = np.stack([u.g for u in updates])
    return w - mu * (d @ G)


def error_metric(per_device_models: Sequence[np.ndarray] | np.ndarray, true_w: np.ndarray) -> float:
    """Mean Euclidean distance between each device's model and the true weights."""
    models = np.asarray(per_device_models, dtype=float)
    if models.ndim != 2 or models.shape[0] < 1:
        raise ValueError("expected a non-empty (K, L) collection of models")
    return float(np.linalg.norm(models - true_w, axis=1).mean())
