"""Activation functions used by the encoder/decoder networks.

sigmoid(x) = 1 / (1 + e^-x), evaluated with the usual two-branch form so
large |x| does not overflow; the branches are algebraically identical.
"""

from __future__ import annotations

import numpy as np

ACTIVATION_KINDS = ("sigmoid", "relu", "tanh", "elu", "linear")


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    pos = x >= 0
    neg = ~pos
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[neg])
    out[neg] = ex / (1.0 + ex)
    return out


def apply(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "relu":
        return np.maximum(z, 0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "elu":
        return np.where(z > 0, z, np.expm1(z))
    if kind == "linear":
        return z
    raise ValueError(f"unknown activation {kind!r}")


def derivative(kind: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d activation / dz, given pre-activation z and output y = apply(kind, z)."""
    if kind == "sigmoid":
        return y * (1.0 - y)
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    if kind == "tanh":
        return 1.0 - y * y
    if kind == "elu":
        one = np.asarray(1.0, dtype=z.dtype)
        return np.where(z > 0, one, y + 1.0)
    if kind == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")
