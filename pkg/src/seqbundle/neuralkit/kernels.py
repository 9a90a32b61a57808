"""Pure-numpy numeric primitives (no autodiff involved)."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError

PROB_FLOOR = 1e-12


def _check_finite(x: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{op}: input contains NaN or Inf")
    return x


def softmax(x: np.ndarray) -> np.ndarray:
    """Softmax over the last axis, max-subtracted so large inputs cannot overflow."""
    arr = _check_finite(np.asarray(x, dtype=np.float64), "softmax")
    shifted = arr - arr.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """Negative log probability of ``label``, clamped at 1e-12."""
    arr = _check_finite(np.asarray(probs, dtype=np.float64), "cross_entropy")
    if arr.ndim != 1:
        raise NumericError(f"cross_entropy expects a vector, got shape {arr.shape}")
    if not 0 <= label < arr.shape[0]:
        raise NumericError(f"label {label} outside 0..{arr.shape[0] - 1}")
    return float(-np.log(max(float(arr[label]), PROB_FLOOR)))


def positional_encoding(position: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal encoding of one position.

    Entry 2k is sin(position / 10000^(2k/dim)), entry 2k+1 the matching cos.
    """
    if dim < 2 or dim % 2 != 0:
        raise NumericError(f"encoding dim must be even and >= 2, got {dim}")
    if position < 0:
        raise NumericError(f"position must be >= 0, got {position}")
    k = np.arange(dim // 2, dtype=np.float64)
    angle = position / np.power(10000.0, 2.0 * k / dim)
    out = np.empty(dim, dtype=np.float64)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


def positional_encoding_matrix(n_positions: int, dim: int) -> np.ndarray:
    """(n_positions, dim) stack of fixed sinusoidal encodings."""
    return np.stack(
        [positional_encoding(p, dim) for p in range(n_positions)], axis=0
    )
