"""Model and training configuration dataclasses."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

from ..errors import ConstraintViolation, SchemaError

N_CLASSES = 3


class ModelKind(str, Enum):
    MLP = "mlp"
    LSTM = "lstm"
    TRANSFORMER = "transformer"  # causal decoder, fixed positions
    ENCODER = "encoder"  # bidirectional, learned positions


@dataclass(frozen=True, slots=True)
class TransformerConfig:
    input_dim: int
    embed_dim: int = 256
    n_blocks: int = 3
    n_heads: int = 8
    head_dim: int = 32
    ff_dim: int = 2048
    causal: bool = True
    positional: str = "fixed"  # "fixed" sinusoidal or "learned" table
    n_classes: int = N_CLASSES
    max_positions: int = 512

    def __post_init__(self) -> None:
        if self.n_heads * self.head_dim != self.embed_dim:
            raise ConstraintViolation(
                f"n_heads * head_dim must equal embed_dim "
                f"({self.n_heads} * {self.head_dim} != {self.embed_dim})"
            )
        if self.ff_dim < self.embed_dim:
            raise ConstraintViolation(
                f"ff_dim ({self.ff_dim}) must be >= embed_dim ({self.embed_dim})"
            )
        if self.positional not in ("fixed", "learned"):
            raise ConstraintViolation(
                f"positional must be 'fixed' or 'learned', got {self.positional!r}"
            )
        if self.positional == "fixed" and self.embed_dim % 2 != 0:
            raise ConstraintViolation("fixed positional encoding needs an even embed_dim")
        if min(self.input_dim, self.n_blocks, self.max_positions) < 1:
            raise ConstraintViolation("transformer dimensions must be >= 1")


@dataclass(frozen=True, slots=True)
class LSTMConfig:
    input_dim: int
    hidden_dim: int = 128
    n_layers: int = 2
    n_classes: int = N_CLASSES

    def __post_init__(self) -> None:
        if min(self.input_dim, self.hidden_dim, self.n_layers) < 1:
            raise ConstraintViolation("LSTM dimensions must be >= 1")


@dataclass(frozen=True, slots=True)
class MLPConfig:
    input_dim: int
    hidden_dim: int = 256
    n_layers: int = 3
    n_classes: int = N_CLASSES

    def __post_init__(self) -> None:
        if min(self.input_dim, self.hidden_dim, self.n_layers) < 1:
            raise ConstraintViolation("MLP dimensions must be >= 1")


@dataclass(frozen=True, slots=True)
class TrainConfig:
    """Teacher-forced training with early stopping on an inner validation split."""

    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.1
    patience: int = 5
    min_delta: float = 0.0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConstraintViolation("epochs and batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConstraintViolation("validation_fraction must be in [0, 1)")
        if self.patience < 1:
            raise ConstraintViolation("patience must be >= 1")


_CONFIG_TYPES = {
    ModelKind.MLP: MLPConfig,
    ModelKind.LSTM: LSTMConfig,
    ModelKind.TRANSFORMER: TransformerConfig,
    ModelKind.ENCODER: TransformerConfig,
}


def config_to_json(kind: ModelKind, config) -> dict:
    return {"kind": kind.value, **asdict(config)}


def config_from_json(obj: dict) -> tuple[ModelKind, object]:
    try:
        kind = ModelKind(obj["kind"])
    except (KeyError, ValueError):
        raise SchemaError(f"unknown model kind in config: {obj.get('kind')!r}") from None
    cls = _CONFIG_TYPES[kind]
    fields = {k: v for k, v in obj.items() if k != "kind"}
    try:
        return kind, cls(**fields)
    except TypeError as exc:
        raise SchemaError(f"bad model config for kind {kind.value!r}: {exc}") from None
