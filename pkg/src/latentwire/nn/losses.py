"""Training losses: binary cross-entropy and per-feature mean squared error.

MSE for a sample is (1/N) * sum((x_in - x_rec)^2) with N the feature
count of the original space; batch values average over samples. BCE
clamps predictions to [eps, 1-eps], eps = 1e-7.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

LOSS_KINDS = ("binary_cross_entropy", "mean_squared_error")
BCE_EPS = 1e-7


def loss_value(kind: str, predicted, target) -> float:
    """Loss between two equal-length vectors (the unbatched op surface)."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"loss: predicted {p.shape} vs target {t.shape}")
    return float(batch_loss(kind, p.reshape(1, -1), t.reshape(1, -1)))


def batch_loss(kind: str, predicted: np.ndarray, target: np.ndarray):
    if predicted.shape != target.shape:
        raise ShapeError(f"loss: predicted {predicted.shape} vs target {target.shape}")
    n, width = predicted.shape
    if kind == "mean_squared_error":
        diff = predicted - target
        return np.sum(diff * diff) / (n * width)
    if kind == "binary_cross_entropy":
        p = np.clip(predicted, BCE_EPS, 1.0 - BCE_EPS)
        return -np.sum(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)) / (n * width)
    raise ValueError(f"unknown loss {kind!r}")


def batch_loss_grad(kind: str, predicted: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(batch loss) / d(predicted)."""
    n, width = predicted.shape
    if kind == "mean_squared_error":
        return 2.0 * (predicted - target) / (n * width)
    if kind == "binary_cross_entropy":
        # Clamped predictions carry no gradient, matching the clipped loss.
        p = np.clip(predicted, BCE_EPS, 1.0 - BCE_EPS)
        grad = (p - target) / (p * (1.0 - p)) / (n * width)
        inside = (predicted > BCE_EPS) & (predicted < 1.0 - BCE_EPS)
        return np.where(inside, grad, 0.0).astype(predicted.dtype)
    raise ValueError(f"unknown loss {kind!r}")
