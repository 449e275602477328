"""Dense autoencoder mapping expression vectors to a compact latent space.

The encoder stacks linear -> batchnorm -> ReLU blocks down to the
latent width (linear output, no activation); the decoder mirrors the
encoder with the final reconstruction layer linear only. Training
minimizes reconstruction MSE on upstream data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset, with_manifest
from .errors import ConfigError, DimensionError, NumericalError
from .fingerprint import array_fingerprint
from .nn import (
    AdamState,
    BatchNormLayer,
    GradientTape,
    LinearLayer,
    Tensor,
    adam_step,
    mse_loss,
    ops,
)
from .rng import named_stream


@dataclass(frozen=True)
class AutoencoderSpec:
    input_width: int
    latent_width: int = 256
    encoder_widths: tuple[int, ...] = (2048, 1024, 512)

    def validate(self) -> None:
        if self.input_width < 1 or self.latent_width < 1:
            raise ConfigError(
                f"widths must be positive, got input={self.input_width}, "
                f"latent={self.latent_width}"
            )
        if not self.encoder_widths or min(self.encoder_widths) < 1:
            raise ConfigError(f"encoder_widths must be non-empty positive, got {self.encoder_widths}")

    def to_dict(self) -> dict:
        return {
            "input_width": self.input_width,
            "latent_width": self.latent_width,
            "encoder_widths": list(self.encoder_widths),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AutoencoderSpec":
        return cls(
            input_width=d["input_width"],
            latent_width=d["latent_width"],
            encoder_widths=tuple(d["encoder_widths"]),
        )


@dataclass
class LatentEmbedding:
    """Latent matrix plus the identity of the model that produced it."""

    Z: np.ndarray
    source_cell_type: str
    autoencoder_fingerprint: str


class Autoencoder:
    def __init__(self, spec: AutoencoderSpec, seed: int = 0, dtype=np.float32) -> None:
        spec.validate()
        self.spec = spec
        self.dtype = dtype
        self.training = True

        def stream(name: str) -> np.random.Generator:
            return named_stream(seed, f"autoencoder/{name}")

        widths = [spec.input_width, *spec.encoder_widths]
        self.encoder_blocks: list[tuple[LinearLayer, BatchNormLayer]] = []
        for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
            linear = LinearLayer(w_in, w_out, rng=stream(f"enc{i}"), init="he", dtype=dtype)
            self.encoder_blocks.append((linear, BatchNormLayer(w_out, dtype=dtype)))
        self.to_latent = LinearLayer(
            widths[-1], spec.latent_width, rng=stream("latent"), init="xavier", dtype=dtype
        )

        mirrored = [spec.latent_width, *reversed(spec.encoder_widths)]
        self.decoder_blocks: list[tuple[LinearLayer, BatchNormLayer]] = []
        for i, (w_in, w_out) in enumerate(zip(mirrored[:-1], mirrored[1:])):
            linear = LinearLayer(w_in, w_out, rng=stream(f"dec{i}"), init="he", dtype=dtype)
            self.decoder_blocks.append((linear, BatchNormLayer(w_out, dtype=dtype)))
        self.to_output = LinearLayer(
            mirrored[-1], spec.input_width, rng=stream("output"), init="xavier", dtype=dtype
        )

    def train_mode(self) -> None:
        self.training = True

    def eval_mode(self) -> None:
        self.training = False

    # -- tape-level forward ------------------------------------------------

    def encode_tensor(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.spec.input_width:
            raise DimensionError(
                f"autoencoder takes width {self.spec.input_width}, got input {x.shape}"
            )
        h = x
        for linear, bn in self.encoder_blocks:
            h = ops.relu(bn(linear(h), self.training))
        return self.to_latent(h)

    def decode_tensor(self, z: Tensor) -> Tensor:
        if z.shape[-1] != self.spec.latent_width:
            raise DimensionError(
                f"decoder takes width {self.spec.latent_width}, got input {z.shape}"
            )
        h = z
        for linear, bn in self.decoder_blocks:
            h = ops.relu(bn(linear(h), self.training))
        return self.to_output(h)

    # -- array-level API (eval mode, batched) -------------------------------

    def encode(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        was_training = self.training
        self.eval_mode()
        try:
            parts = [
                self.encode_tensor(Tensor(np.asarray(x[i : i + batch_size], dtype=self.dtype))).data
                for i in range(0, len(x), batch_size)
            ]
        finally:
            self.training = was_training
        return np.vstack(parts)

    def decode(self, z: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        was_training = self.training
        self.eval_mode()
        try:
            parts = [
                self.decode_tensor(Tensor(np.asarray(z[i : i + batch_size], dtype=self.dtype))).data
                for i in range(0, len(z), batch_size)
            ]
        finally:
            self.training = was_training
        return np.vstack(parts)

    # -- parameter bookkeeping ----------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for i, (linear, bn) in enumerate(self.encoder_blocks):
            for k, v in linear.parameters().items():
                named[f"enc{i}.linear.{k}"] = v
            for k, v in bn.parameters().items():
                named[f"enc{i}.bn.{k}"] = v
        for k, v in self.to_latent.parameters().items():
            named[f"latent.{k}"] = v
        for i, (linear, bn) in enumerate(self.decoder_blocks):
            for k, v in linear.parameters().items():
                named[f"dec{i}.linear.{k}"] = v
            for k, v in bn.parameters().items():
                named[f"dec{i}.bn.{k}"] = v
        for k, v in self.to_output.parameters().items():
            named[f"output.{k}"] = v
        return named

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {name: p.data for name, p in self.parameters().items()}
        for i, (_, bn) in enumerate(self.encoder_blocks):
            for k, v in bn.buffers().items():
                arrays[f"enc{i}.bn.{k}"] = v
        for i, (_, bn) in enumerate(self.decoder_blocks):
            for k, v in bn.buffers().items():
                arrays[f"dec{i}.bn.{k}"] = v
        return arrays

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters().items():
            p.data = np.asarray(arrays[name], dtype=self.dtype)
        for i, (_, bn) in enumerate(self.encoder_blocks):
            bn.load_buffers(
                {k: arrays[f"enc{i}.bn.{k}"] for k in ("running_mean", "running_var")}
            )
        for i, (_, bn) in enumerate(self.decoder_blocks):
            bn.load_buffers(
                {k: arrays[f"dec{i}.bn.{k}"] for k in ("running_mean", "running_var")}
            )

    def fingerprint(self) -> str:
        return array_fingerprint(self.state_arrays())


@dataclass
class TrainConfig:
    """Shared knobs for every training loop in the package."""

    learning_rate: float = 1e-3
    batch_size: int = 512
    epochs: int = 30
    seed: int = 0
    split_ratio: float = 0.7

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "split_ratio": self.split_ratio,
        }


def iterate_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled batch index slices; a trailing singleton is dropped
    because batchnorm cannot train on it."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        batch = order[start : start + batch_size]
        if batch.size >= 2:
            yield batch


def train_autoencoder(
    data: np.ndarray,
    spec: AutoencoderSpec,
    config: TrainConfig,
    val_data: np.ndarray | None = None,
) -> tuple[Autoencoder, list[dict]]:
    """Train by reconstruction MSE; returns the model and per-epoch history."""
    config.validate()
    data = np.asarray(data, dtype=np.float32)
    if data.shape[0] < 2 * config.batch_size:
        raise ConfigError(
            f"need at least 2x batch_size rows to train, got {data.shape[0]} rows "
            f"for batch_size {config.batch_size}"
        )
    model = Autoencoder(spec, seed=config.seed)
    params = model.parameters()
    names = list(params)
    state = AdamState(params)
    batch_rng = named_stream(config.seed, "autoencoder/batches")

    history: list[dict] = []
    for epoch in range(config.epochs):
        model.train_mode()
        epoch_losses = []
        for b, batch in enumerate(iterate_batches(data.shape[0], config.batch_size, batch_rng)):
            x = Tensor(data[batch])
            with GradientTape() as tape:
                reconstructed = model.decode_tensor(model.encode_tensor(x))
                loss = mse_loss(reconstructed, x)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalError(
                    f"autoencoder loss became non-finite at epoch {epoch}, batch {b}"
                )
            grads = dict(zip(names, tape.gradients(loss, list(params.values()))))
            adam_step(params, grads, state, config.learning_rate)
            epoch_losses.append(value)
        row = {"epoch": epoch, "train_mse": float(np.mean(epoch_losses))}
        if val_data is not None:
            row["val_mse"] = reconstruction_mse(model, val_data)
        history.append(row)
    model.eval_mode()
    return model, history


def reconstruction_mse(model: Autoencoder, x: np.ndarray) -> float:
    """Mean over all entries of (x - decode(encode(x)))^2, in eval mode."""
    x = np.asarray(x, dtype=np.float32)
    reconstructed = model.decode(model.encode(x))
    diff = x - reconstructed
    return float(np.mean(diff * diff, dtype=np.float64))


def encode_embedding(model: Autoencoder, x: np.ndarray, cell_type: str) -> LatentEmbedding:
    return LatentEmbedding(
        Z=model.encode(x),
        source_cell_type=cell_type,
        autoencoder_fingerprint=model.fingerprint(),
    )


def embed_dataset(model: Autoencoder, dataset: LabeledDataset, preprocess=None) -> LabeledDataset:
    """Encode a dataset into latent space, carrying labels and lineage."""
    x = dataset.X if preprocess is None else preprocess.transform(dataset.X)
    z = model.encode(x)
    return with_manifest(
        LabeledDataset(
            X=z,
            labels=dataset.labels,
            cell_type=dataset.cell_type,
            manifest=dict(dataset.manifest),
        ),
        embedding={
            "autoencoder_fingerprint": model.fingerprint(),
            "source_fingerprint": dataset.fingerprint(),
            "latent_width": model.spec.latent_width,
        },
    )
