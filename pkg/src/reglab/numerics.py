"""Dense float64 matrix primitives used by the network blocks.

Everything here operates on 2-D float64 arrays and returns fresh arrays.
These are the forward-only reference implementations; the autodiff layer
(reglab.autodiff) wraps the same math with gradients. Conventions:

* rows index correspondences (the N axis), columns index channels,
* all outputs are finite whenever inputs are finite and preconditions
  hold; violations raise rather than propagate NaN,
* normalizations use eps = 1e-5 inside the square root.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    ContractError,
    DegenerateInputError,
    ShapeError,
    UninitializedStatsError,
)

EPS_NORM = 1e-5


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array, rejecting non-finite entries."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name}: expected 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name}: contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "matmul lhs")
    b = as_matrix(b, "matmul rhs")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, lhs {a.shape} vs rhs {b.shape}")
    return a @ b


def relu(m) -> np.ndarray:
    return np.maximum(as_matrix(m, "relu input"), 0.0)


def sigmoid(m) -> np.ndarray:
    m = as_matrix(m, "sigmoid input")
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    e = np.exp(m[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with max subtraction; rows sum to 1 within 1e-9."""
    m = as_matrix(m, "softmax input")
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def instance_norm(m, eps: float = EPS_NORM) -> np.ndarray:
    """Standardize each column over the rows: zero mean, unit variance.

    Uses the population variance and sqrt(var + eps). Requires at least
    two rows; a single row has no spread to normalize.
    """
    m = as_matrix(m, "instance_norm input")
    if m.shape[0] < 2:
        raise DegenerateInputError(
            f"instance_norm: needs >= 2 rows, got {m.shape[0]}"
        )
    mu = m.mean(axis=0, keepdims=True)
    var = ((m - mu) ** 2).mean(axis=0, keepdims=True)
    return (m - mu) / np.sqrt(var + eps)


def batch_norm(
    m,
    scale,
    shift,
    mode: str,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    momentum: float = 0.1,
    eps: float = EPS_NORM,
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Batch normalization with batch-size-1 semantics.

    The single "batch" is the N rows, so train-mode statistics are the
    per-channel statistics over rows (they coincide with instance
    statistics). Returns (output, running_mean, running_var).

    Train mode normalizes with the current batch statistics and updates
    the running statistics by EMA with the given momentum; on the first
    train step the running statistics adopt the batch statistics (they
    start unpopulated). Eval mode normalizes with the running statistics
    and raises if they were never populated. The affine scale/shift is
    applied in both modes. Running variance is stored unbiased.
    """
    m = as_matrix(m, "batch_norm input")
    scale = np.asarray(scale, dtype=np.float64).reshape(1, -1)
    shift = np.asarray(shift, dtype=np.float64).reshape(1, -1)
    if scale.shape[1] != m.shape[1] or shift.shape[1] != m.shape[1]:
        raise ShapeError(
            f"batch_norm: affine params {scale.shape}/{shift.shape} do not "
            f"match input {m.shape}"
        )
    if mode == "train":
        if m.shape[0] < 2:
            raise DegenerateInputError(
                f"batch_norm: train mode needs >= 2 rows, got {m.shape[0]}"
            )
        mu = m.mean(axis=0, keepdims=True)
        var = ((m - mu) ** 2).mean(axis=0, keepdims=True)
        n = m.shape[0]
        var_unbiased = var * n / (n - 1)
        if running_mean is None or running_var is None:
            new_mean, new_var = mu.copy(), var_unbiased.copy()
        else:
            new_mean = (1.0 - momentum) * running_mean + momentum * mu
            new_var = (1.0 - momentum) * running_var + momentum * var_unbiased
        out = (m - mu) / np.sqrt(var + eps) * scale + shift
        return out, new_mean, new_var
    if mode == "eval":
        if running_mean is None or running_var is None:
            raise UninitializedStatsError(
                "batch_norm: eval mode before any train step populated running stats"
            )
        out = (m - running_mean) / np.sqrt(running_var + eps) * scale + shift
        return out, running_mean, running_var
    raise ContractError(f"batch_norm: unknown mode {mode!r}")


def shuffle_permutation(cols: int, groups: int) -> np.ndarray:
    """Column order produced by channel shuffling.

    Viewing the columns as a (groups, cols // groups) grid, transpose it
    and read the grid back out row-major. For 6 columns in 2 groups the
    order is [0, 3, 1, 4, 2, 5].
    """
    if groups < 1 or cols % groups != 0:
        raise ShapeError(
            f"channel_shuffle: {cols} columns not divisible into {groups} groups"
        )
    return np.arange(cols).reshape(groups, cols // groups).T.reshape(-1)


def channel_shuffle(m, groups: int = 2) -> np.ndarray:
    m = as_matrix(m, "channel_shuffle input")
    return m[:, shuffle_permutation(m.shape[1], groups)]
