"""Model definitions: MLP, LSTM, and a Transformer built on the autodiff kit.

All parameters are float64 and initialized uniformly in
(-1/sqrt(fan_in), +1/sqrt(fan_in)) from a seeded generator, biases at zero,
norm gains at one, so construction is fully deterministic.
"""

from __future__ import annotations

import numpy as np

from .. import neuralkit as nk
from ..errors import ConstraintViolation
from .config import LSTMConfig, MLPConfig, ModelKind, TransformerConfig


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


class SequenceModel:
    """Common parameter-container behavior; subclasses implement forward()."""

    kind: ModelKind

    def __init__(self) -> None:
        self.params: dict[str, nk.Tensor] = {}

    def _add_param(self, name: str, data: np.ndarray) -> nk.Tensor:
        tensor = nk.parameter(data, name=name)
        self.params[name] = tensor
        return tensor

    def forward(
        self, rows: np.ndarray, capture_attention: bool = False
    ) -> tuple[nk.Tensor, np.ndarray | None]:
        raise NotImplementedError

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def set_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        missing = sorted(set(self.params) - set(arrays))
        extra = sorted(set(arrays) - set(self.params))
        if missing or extra:
            raise ConstraintViolation(
                f"parameter name mismatch: missing {missing}, unexpected {extra}"
            )
        for name, tensor in self.params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != tensor.data.shape:
                raise ConstraintViolation(
                    f"parameter {name!r}: shape {arr.shape} != {tensor.data.shape}"
                )
            tensor.data = arr.copy()

    @property
    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _check_rows(self, rows: np.ndarray, input_dim: int) -> np.ndarray:
        arr = np.asarray(rows, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != input_dim:
            raise ConstraintViolation(
                f"expected (n_events, {input_dim}) feature rows, got {arr.shape}"
            )
        if arr.shape[0] < 1:
            raise ConstraintViolation("forward() needs at least one feature row")
        return arr


def _linear(x: nk.Tensor, w: nk.Tensor, b: nk.Tensor) -> nk.Tensor:
    return nk.add(nk.matmul(x, w), b)


class MLPModel(SequenceModel):
    """Stateless per-row classifier; its context is only the feature row itself."""

    kind = ModelKind.MLP

    def __init__(self, config: MLPConfig, seed: int = 0) -> None:
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        dims = [config.input_dim] + [config.hidden_dim] * config.n_layers
        for i in range(config.n_layers):
            self._add_param(f"layer{i}/w", _uniform(rng, dims[i], (dims[i], dims[i + 1])))
            self._add_param(f"layer{i}/b", np.zeros(dims[i + 1]))
        self._add_param(
            "head/w", _uniform(rng, config.hidden_dim, (config.hidden_dim, config.n_classes))
        )
        self._add_param("head/b", np.zeros(config.n_classes))

    def forward(
        self, rows: np.ndarray, capture_attention: bool = False
    ) -> tuple[nk.Tensor, np.ndarray | None]:
        x = nk.Tensor(self._check_rows(rows, self.config.input_dim))
        for i in range(self.config.n_layers):
            x = nk.relu(_linear(x, self.params[f"layer{i}/w"], self.params[f"layer{i}/b"]))
        probs = nk.softmax_rows(_linear(x, self.params["head/w"], self.params["head/b"]))
        return probs, None


class LSTMModel(SequenceModel):
    """Stacked LSTM; fused gate matrices in (input, forget, cell, output) order."""

    kind = ModelKind.LSTM

    def __init__(self, config: LSTMConfig, seed: int = 0) -> None:
        super().__init__()
        self.config = config
        rng = np.random.default_rng(seed)
        h = config.hidden_dim
        for layer in range(config.n_layers):
            in_dim = config.input_dim if layer == 0 else h
            self._add_param(f"l{layer}/wx", _uniform(rng, in_dim, (in_dim, 4 * h)))
            self._add_param(f"l{layer}/wh", _uniform(rng, h, (h, 4 * h)))
            self._add_param(f"l{layer}/b", np.zeros(4 * h))
        self._add_param("head/w1", _uniform(rng, h, (h, h)))
        self._add_param("head/b1", np.zeros(h))
        self._add_param("head/w2", _uniform(rng, h, (h, config.n_classes)))
        self._add_param("head/b2", np.zeros(config.n_classes))

    def forward(
        self, rows: np.ndarray, capture_attention: bool = False
    ) -> tuple[nk.Tensor, np.ndarray | None]:
        arr = self._check_rows(rows, self.config.input_dim)
        h_dim = self.config.hidden_dim
        n_steps = arr.shape[0]
        zeros = nk.Tensor(np.zeros((1, h_dim)))
        h_state = [zeros] * self.config.n_layers
        c_state = [zeros] * self.config.n_layers
        outputs: list[nk.Tensor] = []
        for t in range(n_steps):
            x: nk.Tensor = nk.Tensor(arr[t : t + 1])
            for layer in range(self.config.n_layers):
                gates = nk.add(
                    nk.add(
                        nk.matmul(x, self.params[f"l{layer}/wx"]),
                        nk.matmul(h_state[layer], self.params[f"l{layer}/wh"]),
                    ),
                    self.params[f"l{layer}/b"],
                )
                gi = nk.sigmoid(nk.slice_cols(gates, 0, h_dim))
                gf = nk.sigmoid(nk.slice_cols(gates, h_dim, 2 * h_dim))
                gc = nk.tanh(nk.slice_cols(gates, 2 * h_dim, 3 * h_dim))
                go = nk.sigmoid(nk.slice_cols(gates, 3 * h_dim, 4 * h_dim))
                c_new = nk.add(nk.mul(gf, c_state[layer]), nk.mul(gi, gc))
                h_new = nk.mul(go, nk.tanh(c_new))
                c_state[layer] = c_new
                h_state[layer] = h_new
                x = h_new
            outputs.append(x)
        stacked = nk.concat_rows(outputs)
        hidden = nk.relu(_linear(stacked, self.params["head/w1"], self.params["head/b1"]))
        probs = nk.softmax_rows(_linear(hidden, self.params["head/w2"], self.params["head/b2"]))
        return probs, None


class TransformerModel(SequenceModel):
    """Pre-norm residual Transformer with per-head attention capture.

    causal=True masks attention to positions <= i (decoder); causal=False
    attends everywhere, which is only valid for training-phase use or on
    inputs already truncated at the prediction position.
    """

    def __init__(self, config: TransformerConfig, seed: int = 0) -> None:
        super().__init__()
        self.config = config
        self.kind = ModelKind.TRANSFORMER if config.causal else ModelKind.ENCODER
        rng = np.random.default_rng(seed)
        d = config.embed_dim
        self._add_param("embed/w", _uniform(rng, config.input_dim, (config.input_dim, d)))
        self._add_param("embed/b", np.zeros(d))
        if config.positional == "learned":
            self._add_param("pos_table", _uniform(rng, d, (config.max_positions, d)))
        for i in range(config.n_blocks):
            self._add_param(f"block{i}/ln1/gain", np.ones(d))
            self._add_param(f"block{i}/ln1/bias", np.zeros(d))
            for head in range(config.n_heads):
                for proj in ("wq", "wk", "wv"):
                    self._add_param(
                        f"block{i}/head{head}/{proj}",
                        _uniform(rng, d, (d, config.head_dim)),
                    )
            self._add_param(f"block{i}/attn_out/w", _uniform(rng, d, (d, d)))
            self._add_param(f"block{i}/attn_out/b", np.zeros(d))
            self._add_param(f"block{i}/ln2/gain", np.ones(d))
            self._add_param(f"block{i}/ln2/bias", np.zeros(d))
            self._add_param(f"block{i}/ff/w1", _uniform(rng, d, (d, config.ff_dim)))
            self._add_param(f"block{i}/ff/b1", np.zeros(config.ff_dim))
            self._add_param(f"block{i}/ff/w2", _uniform(rng, config.ff_dim, (config.ff_dim, d)))
            self._add_param(f"block{i}/ff/b2", np.zeros(d))
        self._add_param("final_ln/gain", np.ones(d))
        self._add_param("final_ln/bias", np.zeros(d))
        self._add_param("head/w", _uniform(rng, d, (d, config.n_classes)))
        self._add_param("head/b", np.zeros(config.n_classes))

    def _norm(self, x: nk.Tensor, prefix: str) -> nk.Tensor:
        normalized = nk.layer_norm(x)
        return nk.add(
            nk.mul(normalized, self.params[f"{prefix}/gain"]),
            self.params[f"{prefix}/bias"],
        )

    def _positions(self, n: int) -> nk.Tensor:
        if self.config.positional == "fixed":
            return nk.Tensor(nk.positional_encoding_matrix(n, self.config.embed_dim))
        if n > self.config.max_positions:
            raise ConstraintViolation(
                f"session has {n} events but the learned position table holds "
                f"{self.config.max_positions}"
            )
        return nk.take_rows(self.params["pos_table"], np.arange(n))

    def forward(
        self, rows: np.ndarray, capture_attention: bool = False
    ) -> tuple[nk.Tensor, np.ndarray | None]:
        arr = self._check_rows(rows, self.config.input_dim)
        n = arr.shape[0]
        cfg = self.config
        x = nk.add(
            _linear(nk.Tensor(arr), self.params["embed/w"], self.params["embed/b"]),
            self._positions(n),
        )
        captured = (
            np.zeros((cfg.n_blocks, cfg.n_heads, n, n)) if capture_attention else None
        )
        inv_sqrt_dk = 1.0 / np.sqrt(cfg.head_dim)
        for i in range(cfg.n_blocks):
            normed = self._norm(x, f"block{i}/ln1")
            head_outputs = []
            for head in range(cfg.n_heads):
                q = nk.matmul(normed, self.params[f"block{i}/head{head}/wq"])
                k = nk.matmul(normed, self.params[f"block{i}/head{head}/wk"])
                v = nk.matmul(normed, self.params[f"block{i}/head{head}/wv"])
                scores = nk.scale(nk.matmul(q, nk.transpose(k)), inv_sqrt_dk)
                alpha = nk.causal_softmax(scores) if cfg.causal else nk.softmax_rows(scores)
                if captured is not None:
                    captured[i, head] = alpha.data
                head_outputs.append(nk.matmul(alpha, v))
            attn = _linear(
                nk.concat_cols(head_outputs),
                self.params[f"block{i}/attn_out/w"],
                self.params[f"block{i}/attn_out/b"],
            )
            x = nk.add(x, attn)
            ff_in = self._norm(x, f"block{i}/ln2")
            ff = _linear(
                nk.relu(_linear(ff_in, self.params[f"block{i}/ff/w1"], self.params[f"block{i}/ff/b1"])),
                self.params[f"block{i}/ff/w2"],
                self.params[f"block{i}/ff/b2"],
            )
            x = nk.add(x, ff)
        final = self._norm(x, "final_ln")
        probs = nk.softmax_rows(_linear(final, self.params["head/w"], self.params["head/b"]))
        return probs, captured


def make_model(kind: ModelKind, config, seed: int = 0) -> SequenceModel:
    if kind is ModelKind.MLP:
        return MLPModel(config, seed=seed)
    if kind is ModelKind.LSTM:
        return LSTMModel(config, seed=seed)
    if kind is ModelKind.TRANSFORMER:
        if not config.causal:
            raise ConstraintViolation("transformer kind requires causal=True")
        return TransformerModel(config, seed=seed)
    if kind is ModelKind.ENCODER:
        if config.causal:
            raise ConstraintViolation("encoder kind requires causal=False")
        return TransformerModel(config, seed=seed)
    raise ConstraintViolation(f"unknown model kind {kind!r}")
