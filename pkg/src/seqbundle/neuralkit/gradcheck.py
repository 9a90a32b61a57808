"""Finite-difference verification of reverse-mode gradients.

The numeric route only re-runs the forward pass (central differences with a
perturbed parameter entry); it never reads autodiff gradients, so the two
routes fail independently.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericError
from .autodiff import Tensor


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    max_entries_per_param: int = 16,
    seed: int = 0,
    tolerance: float | None = None,
) -> float:
    """Max relative error between autodiff and central differences.

    loss_fn must rebuild the forward graph from ``params`` on every call.
    Up to ``max_entries_per_param`` entries per array are probed (all of them
    when the array is small), chosen by a seeded RNG. With ``tolerance`` set,
    a NumericError is raised when the max relative error exceeds it.
    """
    rng = np.random.default_rng(seed)
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise NumericError("grad_check: loss is not finite")
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    worst = 0.0
    for name in sorted(params):
        tensor = params[name]
        flat = tensor.data.reshape(-1)
        n = flat.size
        if n <= max_entries_per_param:
            picks = np.arange(n)
        else:
            picks = rng.choice(n, size=max_entries_per_param, replace=False)
        for idx in np.sort(picks):
            original = flat[idx]
            flat[idx] = original + h
            up = float(loss_fn().data)
            flat[idx] = original - h
            down = float(loss_fn().data)
            flat[idx] = original
            numeric = (up - down) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[idx])
            denom = max(abs(a), abs(numeric), 1e-8)
            err = abs(a - numeric) / denom
            if err > worst:
                worst = err
    if tolerance is not None and worst > tolerance:
        raise NumericError(
            f"grad_check failed: max relative error {worst:.3e} > {tolerance:.1e}"
        )
    return worst
