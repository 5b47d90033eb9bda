"""Dense linear algebra primitives.

Matrices and vectors are float64 numpy arrays. Operations accept a single
sample of shape ``(n,)`` or a batch of shape ``(batch, n)``; a batch is
processed row by row with the same semantics as a single sample.
"""

from dataclasses import dataclass

import numpy as np

from ..common.errors import InvalidInputError, ShapeError

DEFAULT_LAYER_NORM_EPS = 1e-5


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Validate and convert ``values`` to a finite 2-D float64 array."""
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return array


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Validate and convert ``values`` to a finite 1-D float64 array."""
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return array


def linear_forward(W: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Return ``W x + b`` for a sample or ``x W^T + b`` row-wise for a batch."""
    if W.ndim != 2 or b.ndim != 1:
        raise ShapeError(f"Expected 2-D weights and 1-D bias, got {W.shape} and {b.shape}")
    if b.shape[0] != W.shape[0]:
        raise ShapeError(f"Bias length {b.shape[0]} does not match {W.shape[0]} weight rows")
    if x.ndim not in (1, 2) or x.shape[-1] != W.shape[1]:
        raise ShapeError(f"Input of shape {x.shape} does not match {W.shape[1]} weight columns")
    return x @ W.T + b


@dataclass(frozen=True)
class LayerNormCache:
    """Values retained by :func:`layer_norm_forward` for the backward pass."""

    normalized: np.ndarray
    inv_std: np.ndarray


def layer_norm_forward(x: np.ndarray, eps: float = DEFAULT_LAYER_NORM_EPS):
    """Normalize ``x`` along its last axis to zero mean and unit variance.

    There is no learnable scale or shift.

    Returns:
        ``(y, cache)`` where ``y = (x - mean) / sqrt(var + eps)``
    """
    if x.shape[-1] < 2:
        raise InvalidInputError(f"Layer norm needs at least 2 features, got {x.shape[-1]}")
    if eps <= 0:
        raise InvalidInputError(f"Layer norm eps must be positive, got {eps}")
    centered = x - x.mean(axis=-1, keepdims=True)
    var = np.mean(centered ** 2, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    y = centered * inv_std
    return y, LayerNormCache(normalized=y, inv_std=inv_std)


def layer_norm_backward(cache: LayerNormCache, upstream: np.ndarray) -> np.ndarray:
    """Exact differential of :func:`layer_norm_forward`.

    ``dx = inv_std * (g - mean(g) - y * mean(g * y))`` per row, which sums to
    zero along the normalized axis.
    """
    if upstream.shape != cache.normalized.shape:
        raise ShapeError(
            f"Upstream shape {upstream.shape} does not match cached {cache.normalized.shape}"
        )
    y = cache.normalized
    mean_g = upstream.mean(axis=-1, keepdims=True)
    mean_gy = np.mean(upstream * y, axis=-1, keepdims=True)
    return cache.inv_std * (upstream - mean_g - y * mean_gy)
