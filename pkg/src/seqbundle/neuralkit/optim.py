"""Adam with bias correction.

Update rule per parameter entry, at step t (1-based):
    m <- b1*m + (1-b1)*g          mhat = m / (1 - b1^t)
    v <- b2*v + (1-b2)*g^2        vhat = v / (1 - b2^t)
    p <- p - lr * mhat / (sqrt(vhat) + eps)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConstraintViolation, NumericError


@dataclass(frozen=True, slots=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ConstraintViolation("Adam betas must be in [0, 1)")
        if self.learning_rate <= 0 or self.eps <= 0:
            raise ConstraintViolation("Adam learning_rate and eps must be > 0")


class AdamState:
    """First/second moment accumulators keyed by parameter name."""

    def __init__(self, config: AdamConfig | None = None) -> None:
        self.config = config or AdamConfig()
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> dict[str, np.ndarray]:
    """One Adam update. Returns new parameter arrays; mutates ``state``."""
    missing = sorted(set(params) - set(grads))
    if missing:
        raise ConstraintViolation(f"adam_step: no gradient for {missing}")
    cfg = state.config
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - cfg.beta1**t
    bias2 = 1.0 - cfg.beta2**t
    out: dict[str, np.ndarray] = {}
    for name in sorted(params):
        p = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ConstraintViolation(
                f"adam_step: gradient shape {g.shape} != parameter shape "
                f"{p.shape} for {name!r}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"adam_step: non-finite gradient for {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        update = cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps)
        out[name] = p - update
    return out
