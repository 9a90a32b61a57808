"""Reverse-mode autodiff over a fixed set of float64 numpy kernels.

Every value is a Tensor wrapping a float64 ndarray; ops build a graph of
parent links plus a backward closure. Matmuls go through non-optimized
np.einsum and the causal softmax uses cumulative sums/maxima, so each output
row is computed independently of how many later rows sit in the batch. That
is what makes causal forward passes bit-identical under input truncation.

Tensor construction rejects NaN/Inf, which turns training divergence into an
immediate NumericError instead of silent garbage.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ConstraintViolation, NumericError

PROB_FLOOR = 1e-12
LAYER_NORM_EPS = 1e-12


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
        name: str = "",
    ) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericError(
                f"non-finite values in tensor {name or '<unnamed>'} "
                f"(shape {arr.shape})"
            )
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def needs_grad(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: float = 1.0) -> None:
        """Accumulate gradients of this (scalar) tensor into the graph."""
        if self.data.size != 1:
            raise NumericError(
                f"backward() needs a scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.full_like(self.data, float(seed))
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(name={self.name!r}, shape={self.shape})"


def parameter(data: np.ndarray, name: str = "") -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return Tensor(data)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.needs_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return Tensor(a.data + b.data, parents=(a, b), backward_fn=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return Tensor(a.data * b.data, parents=(a, b), backward_fn=backward)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accum(a, g * factor)

    return Tensor(a.data * factor, parents=(a,), backward_fn=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product via non-optimized einsum (row-stable, BLAS-free)."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ConstraintViolation(
            f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}"
        )

    def backward(g: np.ndarray) -> None:
        _accum(a, np.einsum("ik,jk->ij", g, b.data))
        _accum(b, np.einsum("ij,ik->jk", a.data, g))

    return Tensor(
        np.einsum("ij,jk->ik", a.data, b.data), parents=(a, b), backward_fn=backward
    )


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ConstraintViolation(f"transpose expects 2-D input, got {x.data.shape}")

    def backward(g: np.ndarray) -> None:
        _accum(x, g.T)

    return Tensor(x.data.T.copy(), parents=(x,), backward_fn=backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g: np.ndarray) -> None:
        _accum(x, g * mask)

    return Tensor(np.where(mask, x.data, 0.0), parents=(x,), backward_fn=backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g: np.ndarray) -> None:
        _accum(x, g * (1.0 - y * y))

    return Tensor(y, parents=(x,), backward_fn=backward)


def sigmoid(x: Tensor) -> Tensor:
    y = np.where(
        x.data >= 0,
        1.0 / (1.0 + np.exp(-np.abs(x.data))),
        np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))),
    )

    def backward(g: np.ndarray) -> None:
        _accum(x, g * y * (1.0 - y))

    return Tensor(y, parents=(x,), backward_fn=backward)


def layer_norm(x: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each row to mean 0, variance 1 (affine rescale is separate).

    eps sits inside the square root; 1e-12 keeps the output variance within
    1e-9 of 1 for any non-degenerate row.
    """
    if x.data.ndim != 2:
        raise ConstraintViolation(f"layer_norm expects 2-D input, got {x.data.shape}")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = (x.data - mu) * inv

    def backward(g: np.ndarray) -> None:
        g_mean = g.mean(axis=1, keepdims=True)
        gy_mean = (g * y).mean(axis=1, keepdims=True)
        _accum(x, inv * (g - g_mean - y * gy_mean))

    return Tensor(y, parents=(x,), backward_fn=backward)


def causal_softmax(scores: Tensor) -> Tensor:
    """Row-wise softmax over columns j <= i; exact zeros above the diagonal.

    Running maxima and cumulative sums make row i's result independent of any
    column beyond i, bit for bit.
    """
    x = scores.data
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ConstraintViolation(
            f"causal_softmax expects a square matrix, got {x.shape}"
        )
    n = x.shape[0]
    diag = np.arange(n)
    run_max = np.maximum.accumulate(x, axis=1)
    m = run_max[diag, diag]
    e = np.tril(np.exp(np.tril(x - m[:, None])))
    denom = np.cumsum(e, axis=1)[diag, diag]
    alpha = e / denom[:, None]

    def backward(g: np.ndarray) -> None:
        dot = (alpha * g).sum(axis=1, keepdims=True)
        _accum(scores, alpha * (g - dot))

    return Tensor(alpha, parents=(scores,), backward_fn=backward)


def softmax_rows(x: Tensor) -> Tensor:
    """Plain row-wise softmax (used by the bidirectional variant and output heads)."""
    if x.data.ndim != 2:
        raise ConstraintViolation(f"softmax_rows expects 2-D input, got {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g: np.ndarray) -> None:
        dot = (y * g).sum(axis=1, keepdims=True)
        _accum(x, y * (g - dot))

    return Tensor(y, parents=(x,), backward_fn=backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    widths = [p.data.shape[1] for p in parts]

    def backward(g: np.ndarray) -> None:
        offset = 0
        for part, width in zip(parts, widths):
            _accum(part, g[:, offset : offset + width])
            offset += width

    return Tensor(
        np.concatenate([p.data for p in parts], axis=1),
        parents=tuple(parts),
        backward_fn=backward,
    )


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    heights = [p.data.shape[0] for p in parts]

    def backward(g: np.ndarray) -> None:
        offset = 0
        for part, height in zip(parts, heights):
            _accum(part, g[offset : offset + height, :])
            offset += height

    return Tensor(
        np.concatenate([p.data for p in parts], axis=0),
        parents=tuple(parts),
        backward_fn=backward,
    )


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        _accum(x, full)

    return Tensor(x.data[:, start:stop], parents=(x,), backward_fn=backward)


def take_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Embedding-style row lookup with scatter-add backward."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ConstraintViolation(f"take_rows expects 1-D indices, got {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise ConstraintViolation(
            f"take_rows index out of range 0..{table.data.shape[0] - 1}"
        )

    def backward(g: np.ndarray) -> None:
        if not table.needs_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx, g)

    return Tensor(table.data[idx], parents=(table,), backward_fn=backward)


def cross_entropy_mean(
    probs: Tensor, labels: np.ndarray, mask: np.ndarray
) -> Tensor:
    """Mean of -log p(label) over masked rows, probabilities clamped at 1e-12."""
    lab = np.asarray(labels, dtype=np.int64)
    msk = np.asarray(mask, dtype=bool)
    n_rows = probs.data.shape[0]
    if lab.shape != (n_rows,) or msk.shape != (n_rows,):
        raise ConstraintViolation(
            f"labels/mask must be ({n_rows},), got {lab.shape} and {msk.shape}"
        )
    n_scored = int(msk.sum())
    if n_scored == 0:
        raise ConstraintViolation("cross_entropy_mean: mask selects no rows")
    rows = np.arange(n_rows)
    picked = probs.data[rows, lab]
    clamped = np.maximum(picked, PROB_FLOOR)
    loss = float(-(np.log(clamped) * msk).sum() / n_scored)

    def backward(g: np.ndarray) -> None:
        grad = np.zeros_like(probs.data)
        live = msk & (picked > PROB_FLOOR)
        grad[rows[live], lab[live]] = -1.0 / clamped[live] / n_scored
        _accum(probs, grad * float(g))

    return Tensor(loss, parents=(probs,), backward_fn=backward)
