"""Classifier heads over latent embeddings: feed-forward and attention.

Both consume the autoencoder's latent vectors. The attention model
treats each latent coordinate as a token of width 1, projects tokens to
a hidden width, runs one multi-head self-attention block with a
residual connection, mean-pools over tokens, and finishes with a small
feed-forward stack. No positional encoding is used, so the block is
token-permutation equivariant by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NumericalError
from .fingerprint import array_fingerprint
from .nn import (
    AdamState,
    BatchNormLayer,
    DropoutLayer,
    GradientTape,
    LinearLayer,
    Tensor,
    adam_step,
    binary_cross_entropy_loss,
    cross_entropy_loss,
    ops,
)
from .data import split_indices
from .embedding import TrainConfig, iterate_batches
from .rng import named_stream

#: Per-head scores are scaled by sqrt(head width), i.e. the width the
#: dot products actually run over; recorded in every history/report.
ATTENTION_SCALING = "sqrt(head_width)"


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, return_weights: bool = False):
    """softmax(q k^T / sqrt(width)) v over the last two axes.

    Rows of the weight matrix sum to 1, so each output row is a convex
    combination of the rows of v.
    """
    width = q.shape[-1]
    if k.shape[-1] != width or v.shape[-2] != k.shape[-2]:
        raise DimensionError(f"attention shapes disagree: q{q.shape} k{k.shape} v{v.shape}")
    axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = ops.mul(ops.matmul(q, ops.transpose(k, axes)), 1.0 / math.sqrt(width))
    weights = ops.softmax(scores, axis=-1)
    out = ops.matmul(weights, v)
    return (out, weights) if return_weights else out


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *batch, length, width = x.shape
    head_width = width // heads
    if batch:
        split = ops.reshape(x, (*batch, length, heads, head_width))
        return ops.transpose(split, (0, 2, 1, 3))
    split = ops.reshape(x, (length, heads, head_width))
    return ops.transpose(split, (1, 0, 2))


def _merge_heads(x: Tensor) -> Tensor:
    if x.ndim == 4:
        n, heads, length, head_width = x.shape
        return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (n, length, heads * head_width))
    heads, length, head_width = x.shape
    return ops.reshape(ops.transpose(x, (1, 0, 2)), (length, heads * head_width))


def multi_head_attention(
    x: Tensor,
    query_proj: LinearLayer,
    key_proj: LinearLayer,
    value_proj: LinearLayer,
    output_proj: LinearLayer,
    heads: int,
    return_weights: bool = False,
):
    """Self-attention: per-head projections, concatenation, output map.

    `x` is (L, D) or (n, L, D); D must be divisible by `heads`.
    """
    width = x.shape[-1]
    if width % heads != 0:
        raise ConfigError(f"hidden width {width} is not divisible by {heads} heads")
    q = _split_heads(query_proj(x), heads)
    k = _split_heads(key_proj(x), heads)
    v = _split_heads(value_proj(x), heads)
    attended, weights = scaled_dot_attention(q, k, v, return_weights=True)
    out = output_proj(_merge_heads(attended))
    return (out, weights) if return_weights else out


@dataclass(frozen=True)
class FFNSpec:
    input_width: int
    num_classes: int
    hidden1: int = 128
    hidden2: int = 64
    dropout: float = 0.1

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return {
            "kind": "ffn",
            "input_width": self.input_width,
            "num_classes": self.num_classes,
            "hidden1": self.hidden1,
            "hidden2": self.hidden2,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FFNSpec":
        return cls(
            input_width=d["input_width"],
            num_classes=d["num_classes"],
            hidden1=d["hidden1"],
            hidden2=d["hidden2"],
            dropout=d["dropout"],
        )


@dataclass(frozen=True)
class AttentionSpec:
    """Attention head configuration.

    `pooling` selects how per-token attention outputs reach the
    feed-forward stack: "flatten" concatenates the refined tokens
    (keeps coordinate identity, the default), "mean" averages them
    (fully token-permutation invariant, but then the classifier can
    only see symmetric statistics of the latent values).
    """

    token_count: int  # one token per latent coordinate
    num_classes: int
    hidden_width: int = 256
    heads: int = 4
    ff_widths: tuple[int, ...] = (128,)
    dropout: float = 0.0
    pooling: str = "flatten"

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.heads < 1 or self.hidden_width % self.heads != 0:
            raise ConfigError(
                f"hidden width {self.hidden_width} must be divisible by heads {self.heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.pooling not in ("flatten", "mean"):
            raise ConfigError(f"pooling must be 'flatten' or 'mean', got {self.pooling!r}")

    @property
    def head_width(self) -> int:
        return self.hidden_width // self.heads

    def to_dict(self) -> dict:
        return {
            "kind": "attention",
            "token_count": self.token_count,
            "num_classes": self.num_classes,
            "hidden_width": self.hidden_width,
            "heads": self.heads,
            "ff_widths": list(self.ff_widths),
            "dropout": self.dropout,
            "pooling": self.pooling,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttentionSpec":
        return cls(
            token_count=d["token_count"],
            num_classes=d["num_classes"],
            hidden_width=d["hidden_width"],
            heads=d["heads"],
            ff_widths=tuple(d["ff_widths"]),
            dropout=d["dropout"],
            pooling=d.get("pooling", "flatten"),
        )


def _output_width(num_classes: int) -> int:
    # binary tasks use a single sigmoid logit
    return 1 if num_classes == 2 else num_classes


class FFNClassifier:
    """Two hidden blocks of linear -> batchnorm -> ReLU -> dropout."""

    def __init__(self, spec: FFNSpec, seed: int = 0, dtype=np.float32) -> None:
        spec.validate()
        self.spec = spec
        self.dtype = dtype
        self.training = True

        def stream(name: str) -> np.random.Generator:
            return named_stream(seed, f"ffn/{name}")

        self.linear1 = LinearLayer(spec.input_width, spec.hidden1, rng=stream("linear1"), dtype=dtype)
        self.bn1 = BatchNormLayer(spec.hidden1, dtype=dtype)
        self.drop1 = DropoutLayer(spec.dropout, stream("dropout1"))
        self.linear2 = LinearLayer(spec.hidden1, spec.hidden2, rng=stream("linear2"), dtype=dtype)
        self.bn2 = BatchNormLayer(spec.hidden2, dtype=dtype)
        self.drop2 = DropoutLayer(spec.dropout, stream("dropout2"))
        self.head = LinearLayer(
            spec.hidden2, _output_width(spec.num_classes), rng=stream("head"), init="xavier", dtype=dtype
        )

    def train_mode(self) -> None:
        self.training = True

    def eval_mode(self) -> None:
        self.training = False

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.spec.input_width:
            raise DimensionError(
                f"classifier takes width {self.spec.input_width}, got input {x.shape}"
            )
        h = self.drop1(ops.relu(self.bn1(self.linear1(x), self.training)), self.training)
        h = self.drop2(ops.relu(self.bn2(self.linear2(h), self.training)), self.training)
        return self.head(h)

    def parameters(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for prefix, layer in (
            ("linear1", self.linear1),
            ("bn1", self.bn1),
            ("linear2", self.linear2),
            ("bn2", self.bn2),
            ("head", self.head),
        ):
            for k, v in layer.parameters().items():
                named[f"{prefix}.{k}"] = v
        return named

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: p.data for name, p in self.parameters().items()}
        for prefix, bn in (("bn1", self.bn1), ("bn2", self.bn2)):
            for k, v in bn.buffers().items():
                arrays[f"{prefix}.{k}"] = v
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters().items():
            p.data = np.asarray(arrays[name], dtype=self.dtype)
        for prefix, bn in (("bn1", self.bn1), ("bn2", self.bn2)):
            bn.load_buffers({k: arrays[f"{prefix}.{k}"] for k in ("running_mean", "running_var")})

    def fingerprint(self) -> str:
        return array_fingerprint(self.state_arrays())


class AttentionClassifier:
    """Token projection, one residual attention block, pooling, FF stack."""

    def __init__(self, spec: AttentionSpec, seed: int = 0, dtype=np.float32) -> None:
        spec.validate()
        self.spec = spec
        self.dtype = dtype
        self.training = True

        def stream(name: str) -> np.random.Generator:
            return named_stream(seed, f"attention/{name}")

        d = spec.hidden_width
        self.token_proj = LinearLayer(1, d, rng=stream("token"), init="xavier", dtype=dtype)
        self.query_proj = LinearLayer(d, d, rng=stream("query"), init="xavier", bias=False, dtype=dtype)
        self.key_proj = LinearLayer(d, d, rng=stream("key"), init="xavier", bias=False, dtype=dtype)
        self.value_proj = LinearLayer(d, d, rng=stream("value"), init="xavier", bias=False, dtype=dtype)
        self.output_proj = LinearLayer(d, d, rng=stream("output"), init="xavier", bias=False, dtype=dtype)

        self.ff_layers: list[LinearLayer] = []
        self.ff_dropouts: list[DropoutLayer] = []
        pooled_width = d * spec.token_count if spec.pooling == "flatten" else d
        widths = [pooled_width, *spec.ff_widths]
        for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
            self.ff_layers.append(LinearLayer(w_in, w_out, rng=stream(f"ff{i}"), dtype=dtype))
            self.ff_dropouts.append(DropoutLayer(spec.dropout, stream(f"ff_dropout{i}")))
        self.head = LinearLayer(
            widths[-1], _output_width(spec.num_classes), rng=stream("head"), init="xavier", dtype=dtype
        )

    def train_mode(self) -> None:
        self.training = True

    def eval_mode(self) -> None:
        self.training = False

    def forward(self, x: Tensor, return_attention: bool = False):
        if x.shape[-1] != self.spec.token_count:
            raise DimensionError(
                f"attention classifier takes width {self.spec.token_count}, got input {x.shape}"
            )
        n = x.shape[0]
        tokens = self.token_proj(ops.reshape(x, (n, self.spec.token_count, 1)))
        attended, weights = multi_head_attention(
            tokens,
            self.query_proj,
            self.key_proj,
            self.value_proj,
            self.output_proj,
            self.spec.heads,
            return_weights=True,
        )
        refined = ops.add(tokens, attended)
        if self.spec.pooling == "mean":
            h = ops.mean(refined, axis=1)
        else:
            h = ops.reshape(refined, (n, self.spec.token_count * self.spec.hidden_width))
        for linear, dropout in zip(self.ff_layers, self.ff_dropouts):
            h = dropout(ops.relu(linear(h)), self.training)
        logits = self.head(h)
        return (logits, weights) if return_attention else logits

    def parameters(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        layers: list[tuple[str, LinearLayer]] = [
            ("token", self.token_proj),
            ("query", self.query_proj),
            ("key", self.key_proj),
            ("value", self.value_proj),
            ("output", self.output_proj),
        ]
        layers += [(f"ff{i}", layer) for i, layer in enumerate(self.ff_layers)]
        layers.append(("head", self.head))
        for prefix, layer in layers:
            for k, v in layer.parameters().items():
                named[f"{prefix}.{k}"] = v
        return named

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.parameters().items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters().items():
            p.data = np.asarray(arrays[name], dtype=self.dtype)

    def fingerprint(self) -> str:
        return array_fingerprint(self.state_arrays())


def _forward_batched(model, z: np.ndarray, batch_size: int = 2048) -> np.ndarray:
    parts = [
        model.forward(Tensor(np.asarray(z[i : i + batch_size], dtype=model.dtype))).data
        for i in range(0, len(z), batch_size)
    ]
    return np.vstack(parts)


def predict(model, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Argmax labels (ties -> lowest index) and row-normalized probabilities."""
    was_training = model.training
    model.eval_mode()
    try:
        logits = _forward_batched(model, z)
    finally:
        model.training = was_training
    if logits.shape[1] == 1:
        p1 = ops._sigmoid_array(logits[:, 0].astype(np.float64))
        probs = np.stack([1.0 - p1, p1], axis=1)
        labels = (logits[:, 0] > 0).astype(np.int64)
    else:
        probs = ops.softmax_rows(logits.astype(np.float64))
        labels = np.argmax(logits, axis=1).astype(np.int64)
    return labels, probs


@dataclass
class TrainHistory:
    """Per-epoch curves plus the split and bookkeeping of a training run."""

    rows: list[dict] = field(default_factory=list)
    train_indices: np.ndarray | None = None
    test_indices: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["epoch,split,loss,accuracy"]
        for row in self.rows:
            e = row["epoch"]
            lines.append(f"{e},train,{row['train_loss']:.6f},{row['train_accuracy']:.6f}")
            lines.append(f"{e},test,{row['test_loss']:.6f},{row['test_accuracy']:.6f}")
        return "\n".join(lines) + "\n"


def _batch_loss(logits: Tensor, labels: np.ndarray, binary: bool) -> Tensor:
    if binary:
        return binary_cross_entropy_loss(logits, labels)
    return cross_entropy_loss(logits, labels)


def _batch_predictions(logits: np.ndarray) -> np.ndarray:
    if logits.shape[1] == 1:
        return (logits[:, 0] > 0).astype(np.int64)
    return np.argmax(logits, axis=1).astype(np.int64)


def build_classifier(spec, seed: int = 0):
    if isinstance(spec, FFNSpec):
        return FFNClassifier(spec, seed=seed)
    if isinstance(spec, AttentionSpec):
        return AttentionClassifier(spec, seed=seed)
    raise ConfigError(f"unknown classifier spec type {type(spec).__name__}")


def train_classifier(
    embeddings: np.ndarray,
    labels: np.ndarray,
    spec,
    config: TrainConfig,
) -> tuple[object, TrainHistory]:
    """Train on a seeded split of the rows; track both splits per epoch.

    Train loss/accuracy are running averages over the epoch's training
    batches; test metrics are computed in eval mode after each epoch.
    """
    config.validate()
    embeddings = np.asarray(embeddings, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (embeddings.shape[0],):
        raise DimensionError(
            f"labels shape {labels.shape} does not match embeddings rows {embeddings.shape[0]}"
        )

    train_idx, test_idx = split_indices(embeddings.shape[0], config.split_ratio, config.seed)
    model = build_classifier(spec, seed=config.seed)
    binary = spec.num_classes == 2

    history = TrainHistory(
        train_indices=train_idx,
        test_indices=test_idx,
        metadata={"spec": spec.to_dict(), "config": config.to_dict()},
    )
    if isinstance(spec, AttentionSpec):
        history.metadata["attention_scaling"] = ATTENTION_SCALING
    present = np.unique(labels[train_idx])
    missing = sorted(set(range(spec.num_classes)) - set(present.tolist()))
    if missing:
        history.warnings.append(f"classes absent from train split: {missing}")

    x_train, y_train = embeddings[train_idx], labels[train_idx]
    x_test, y_test = embeddings[test_idx], labels[test_idx]
    params = model.parameters()
    names = list(params)
    state = AdamState(params)
    batch_rng = named_stream(config.seed, "classifier/batches")

    for epoch in range(config.epochs):
        model.train_mode()
        losses, hits, seen = [], 0, 0
        for b, batch in enumerate(iterate_batches(len(x_train), config.batch_size, batch_rng)):
            x = Tensor(x_train[batch])
            y = y_train[batch]
            with GradientTape() as tape:
                logits = model.forward(x)
                loss = _batch_loss(logits, y, binary)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalError(f"classifier loss became non-finite at epoch {epoch}, batch {b}")
            grads = dict(zip(names, tape.gradients(loss, list(params.values()))))
            adam_step(params, grads, state, config.learning_rate)
            losses.append(value)
            hits += int(np.sum(_batch_predictions(logits.data) == y))
            seen += len(y)

        model.eval_mode()
        test_logits = _forward_batched(model, x_test)
        test_loss = float(_batch_loss(Tensor(test_logits), y_test, binary).data)
        test_pred = _batch_predictions(test_logits)
        history.rows.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "train_accuracy": hits / max(seen, 1),
                "test_loss": test_loss,
                "test_accuracy": float(np.mean(test_pred == y_test)),
            }
        )
    model.eval_mode()
    return model, history


def run_head_sweep(
    embeddings: np.ndarray,
    labels: np.ndarray,
    base_spec: AttentionSpec,
    config: TrainConfig,
    head_counts: tuple[int, ...] = (1, 2, 4, 8),
) -> dict[int, TrainHistory]:
    """Train one attention classifier per head count, same everything else."""
    from dataclasses import replace

    histories: dict[int, TrainHistory] = {}
    for heads in head_counts:
        spec = replace(base_spec, heads=heads)
        _, history = train_classifier(embeddings, labels, spec, config)
        histories[heads] = history
    return histories


def run_dropout_sweep(
    embeddings: np.ndarray,
    labels: np.ndarray,
    base_spec: FFNSpec,
    config: TrainConfig,
    rates: tuple[float, ...] = (0.0, 0.1, 0.2),
) -> dict[float, TrainHistory]:
    """Train one FFN per dropout rate, same everything else."""
    from dataclasses import replace

    histories: dict[float, TrainHistory] = {}
    for rate in rates:
        spec = replace(base_spec, dropout=rate)
        _, history = train_classifier(embeddings, labels, spec, config)
        histories[rate] = history
    return histories


def run_hidden_width_sweep(
    embeddings: np.ndarray,
    labels: np.ndarray,
    base_spec: AttentionSpec,
    config: TrainConfig,
    widths: tuple[int, ...] = (64, 128, 256),
) -> dict[int, TrainHistory]:
    """Train one attention classifier per hidden width."""
    from dataclasses import replace

    histories: dict[int, TrainHistory] = {}
    for width in widths:
        spec = replace(base_spec, hidden_width=width)
        _, history = train_classifier(embeddings, labels, spec, config)
        histories[width] = history
    return histories
