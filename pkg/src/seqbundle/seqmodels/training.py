"""Teacher-forced training loop with early stopping.

The loss is the mean cross-entropy over every scored position (event index
>= 2) in the batch. Sessions stay ragged; each session's graph contributes a
gradient scaled by its share of scored positions, which equals the padded-
and-masked formulation exactly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import neuralkit as nk
from ..dataio import FeaturePipeline
from ..domain import Session
from ..errors import ConstraintViolation, NumericError
from .config import TrainConfig
from .models import SequenceModel

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class TrainResult:
    train_losses: tuple[float, ...]
    val_losses: tuple[float, ...]
    best_epoch: int  # 1-based; epoch whose parameters the model ends up with
    stopped_early: bool
    n_parameters: int


def build_training_arrays(
    pipeline: FeaturePipeline, sessions: Sequence[Session]
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Vectorize sessions; sessions with a single event carry no scored
    positions and are dropped (with a log line)."""
    matrices: list[np.ndarray] = []
    labels: list[np.ndarray] = []
    dropped = 0
    for session in sessions:
        if len(session) < 2:
            dropped += 1
            continue
        matrices.append(pipeline.matrix(session))
        labels.append(pipeline.labels(session))
    if dropped:
        log.info("dropped %d session(s) with fewer than 2 events", dropped)
    return matrices, labels


def _mask(n_events: int) -> np.ndarray:
    mask = np.ones(n_events, dtype=bool)
    mask[0] = False  # the first event is given, never predicted
    return mask


def _dataset_loss(
    model: SequenceModel, matrices: Sequence[np.ndarray], labels: Sequence[np.ndarray]
) -> float:
    """Mean cross-entropy over all scored positions (forward only)."""
    total = 0.0
    count = 0
    for rows, labs in zip(matrices, labels):
        probs, _ = model.forward(rows)
        n_scored = rows.shape[0] - 1
        loss = nk.cross_entropy_mean(probs, labs, _mask(rows.shape[0]))
        total += loss.item() * n_scored
        count += n_scored
    if count == 0:
        raise ConstraintViolation("loss over zero scored positions")
    return total / count


def train_model(
    model: SequenceModel,
    matrices: Sequence[np.ndarray],
    labels: Sequence[np.ndarray],
    config: TrainConfig,
) -> TrainResult:
    """Train in place; the model ends at its best validation epoch.

    Deterministic for fixed seeds: the same model init, data, and TrainConfig
    reproduce identical loss curves and final parameters.
    """
    if len(matrices) != len(labels) or not matrices:
        raise ConstraintViolation("training needs matching, non-empty features/labels")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(matrices))
    n_val = 0
    if config.validation_fraction > 0 and len(matrices) >= 2:
        n_val = min(len(matrices) - 1, max(1, round(config.validation_fraction * len(matrices))))
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    adam = nk.AdamState(
        nk.AdamConfig(
            learning_rate=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
        )
    )
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = np.inf
    best_epoch = 0
    best_arrays: dict[str, np.ndarray] | None = None
    since_best = 0
    stopped_early = False

    for epoch in range(1, config.epochs + 1):
        epoch_order = train_idx[rng.permutation(len(train_idx))]
        epoch_loss = 0.0
        epoch_count = 0
        for start in range(0, len(epoch_order), config.batch_size):
            batch = epoch_order[start : start + config.batch_size]
            total_scored = int(sum(matrices[i].shape[0] - 1 for i in batch))
            if total_scored == 0:
                continue
            model.zero_grads()
            try:
                for i in batch:
                    rows = matrices[i]
                    n_scored = rows.shape[0] - 1
                    probs, _ = model.forward(rows)
                    loss = nk.cross_entropy_mean(probs, labels[i], _mask(rows.shape[0]))
                    loss.backward(seed=n_scored / total_scored)
                    epoch_loss += loss.item() * n_scored
                    epoch_count += n_scored
                grads = {
                    name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                    for name, p in model.params.items()
                }
                updated = nk.adam_step(
                    {name: p.data for name, p in model.params.items()}, grads, adam
                )
            except NumericError as exc:
                raise NumericError(
                    f"training diverged at epoch {epoch}, "
                    f"batch starting at session {start}: {exc}"
                ) from exc
            for name, tensor in model.params.items():
                tensor.data = updated[name]
        train_losses.append(epoch_loss / max(epoch_count, 1))

        if n_val:
            val_loss = _dataset_loss(
                model, [matrices[i] for i in val_idx], [labels[i] for i in val_idx]
            )
            val_losses.append(val_loss)
            if val_loss < best_val - config.min_delta:
                best_val = val_loss
                best_epoch = epoch
                best_arrays = model.param_arrays()
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    stopped_early = True
                    break

    if best_arrays is not None:
        model.set_param_arrays(best_arrays)
    else:
        best_epoch = len(train_losses)
    return TrainResult(
        train_losses=tuple(train_losses),
        val_losses=tuple(val_losses),
        best_epoch=best_epoch,
        stopped_early=stopped_early,
        n_parameters=model.n_parameters,
    )
