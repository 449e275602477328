"""Autoencoder: shapes, determinism, capacity against a PCA oracle."""

import numpy as np
import pytest

from hemalearn.data import ExpressionPreprocess, split_indices
from hemalearn.embedding import (
    Autoencoder,
    AutoencoderSpec,
    TrainConfig,
    embed_dataset,
    reconstruction_mse,
    train_autoencoder,
)
from hemalearn.errors import ConfigError, DimensionError, NumericalError

from conftest import MINI_SYNTH


def test_full_corpus_scale_shapes():
    # 29,150 genes in, 256 latent out (slim hidden width keeps this cheap)
    spec = AutoencoderSpec(input_width=29150, latent_width=256, encoder_widths=(32,))
    model = Autoencoder(spec, seed=0)
    x = np.random.default_rng(0).normal(size=(3, 29150)).astype(np.float32)
    z = model.encode(x)
    assert z.shape == (3, 256)
    assert AutoencoderSpec(input_width=29150).latent_width == 256  # library default


def test_encode_is_deterministic_and_rowwise():
    spec = AutoencoderSpec(input_width=20, latent_width=4, encoder_widths=(16,))
    model = Autoencoder(spec, seed=1)
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 20)).astype(np.float32)
    x[3] = x[0]  # duplicated row
    z1, z2 = model.encode(x), model.encode(x)
    np.testing.assert_array_equal(z1, z2)
    np.testing.assert_array_equal(z1[0], z1[3])


def test_encode_rejects_wrong_width():
    model = Autoencoder(AutoencoderSpec(input_width=20, latent_width=4, encoder_widths=(8,)))
    with pytest.raises(DimensionError, match="width 20"):
        model.encode(np.zeros((2, 19), dtype=np.float32))


def test_decode_round_trip_shape_and_finiteness():
    spec = AutoencoderSpec(input_width=15, latent_width=5, encoder_widths=(12,))
    model = Autoencoder(spec, seed=2)
    x = np.random.default_rng(2).normal(size=(4, 15)).astype(np.float32)
    out = model.decode(model.encode(x))
    assert out.shape == x.shape
    assert np.isfinite(model.decode(np.zeros((1, 5), dtype=np.float32))).all()


def test_decoder_is_lipschitz_with_computable_bound():
    spec = AutoencoderSpec(input_width=10, latent_width=3, encoder_widths=(8,))
    model = Autoencoder(spec, seed=3)
    # eval-mode decoder = linear maps, diagonal batchnorm scale, 1-Lipschitz relu
    bound = 1.0
    for linear, bn in model.decoder_blocks:
        bound *= np.linalg.svd(linear.weight.data, compute_uv=False)[0]
        bound *= np.max(np.abs(bn.gamma.data) / np.sqrt(bn.running_var + bn.eps))
    bound *= np.linalg.svd(model.to_output.weight.data, compute_uv=False)[0]

    rng = np.random.default_rng(3)
    z1 = rng.normal(size=(1, 3)).astype(np.float32)
    z2 = z1 + 1e-2 * rng.normal(size=(1, 3)).astype(np.float32)
    gap = np.linalg.norm(model.decode(z1) - model.decode(z2))
    assert gap <= bound * np.linalg.norm(z1 - z2) * (1 + 1e-5)


def test_encoder_decoder_parameter_mirror():
    g, d = 50, 8
    spec = AutoencoderSpec(input_width=g, latent_width=d, encoder_widths=(32, 16))
    model = Autoencoder(spec)
    encoder = sum(
        p.data.size
        for name, p in model.parameters().items()
        if name.startswith(("enc", "latent"))
    )
    decoder = sum(
        p.data.size
        for name, p in model.parameters().items()
        if name.startswith(("dec", "output"))
    )
    # mirrored weights match; biases differ by the latent (d) vs output (G) widths
    assert decoder - encoder == g - d


def test_train_rejects_small_datasets():
    spec = AutoencoderSpec(input_width=5, latent_width=2, encoder_widths=(4,))
    with pytest.raises(ConfigError, match="2x batch_size"):
        train_autoencoder(np.zeros((10, 5), dtype=np.float32), spec, TrainConfig(batch_size=8))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_diverges_with_absurd_learning_rate():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(64, 10)).astype(np.float32)
    spec = AutoencoderSpec(input_width=10, latent_width=2, encoder_widths=(8,))
    with pytest.raises(NumericalError, match="epoch"):
        train_autoencoder(data, spec, TrainConfig(learning_rate=1e18, batch_size=16, epochs=30))


def test_identical_rows_reach_near_zero_mse():
    row = np.random.default_rng(4).normal(size=12).astype(np.float32)
    data = np.tile(row, (128, 1))
    spec = AutoencoderSpec(input_width=12, latent_width=3, encoder_widths=(8,))
    model, history = train_autoencoder(
        data, spec, TrainConfig(learning_rate=1e-2, batch_size=32, epochs=120, seed=4)
    )
    assert history[-1]["train_mse"] < 1e-3


def test_rank4_capacity_against_pca_oracle():
    rng = np.random.default_rng(5)
    n, g, rank = 2000, 80, 4
    data = (rng.normal(size=(n, rank)) @ rng.normal(size=(rank, g)) / np.sqrt(rank)).astype(
        np.float32
    )
    data += 0.15 * rng.normal(size=(n, g)).astype(np.float32)

    # oracle: best rank-4 reconstruction of the centered data via SVD
    mu = data.mean(axis=0)
    centered = data - mu
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    truncated = (u[:, :rank] * s[:rank]) @ vt[:rank]
    pca_mse = float(np.mean((centered - truncated) ** 2))

    spec = AutoencoderSpec(input_width=g, latent_width=8, encoder_widths=(64,))
    model, history = train_autoencoder(
        data, spec, TrainConfig(learning_rate=2e-3, batch_size=128, epochs=50, seed=5)
    )
    ae_mse = reconstruction_mse(model, data)
    assert ae_mse <= 2.0 * pca_mse
    assert ae_mse < 0.10 * float(np.var(data))


def test_loss_history_mostly_non_increasing(mini_lineage):
    prog, _, _ = mini_lineage
    pre = ExpressionPreprocess.fit(prog.X)
    spec = AutoencoderSpec(input_width=prog.width, latent_width=16, encoder_widths=(64,))
    _, history = train_autoencoder(
        pre.transform(prog.X), spec, TrainConfig(batch_size=256, epochs=20, seed=6)
    )
    losses = [row["train_mse"] for row in history]
    drops = sum(b <= a for a, b in zip(losses, losses[1:]))
    assert drops / (len(losses) - 1) >= 0.9


def test_encode_is_batch_partition_invariant(mini_lineage):
    prog, _, _ = mini_lineage
    spec = AutoencoderSpec(input_width=prog.width, latent_width=8, encoder_widths=(32,))
    model = Autoencoder(spec, seed=7)
    x = prog.X[:100]
    full = model.encode(x, batch_size=100)
    chunked = model.encode(x, batch_size=7)
    np.testing.assert_allclose(full, chunked, atol=1e-5)


def test_downstream_reconstruction_within_lineage_premise(mini_lineage):
    prog, mono, lymph = mini_lineage
    train_idx, test_idx = split_indices(prog.n, 0.7, seed=8)
    pre = ExpressionPreprocess.fit(prog.X[train_idx])
    spec = AutoencoderSpec(input_width=prog.width, latent_width=16, encoder_widths=(64,))
    model, _ = train_autoencoder(
        pre.transform(prog.X[train_idx]),
        spec,
        TrainConfig(batch_size=256, epochs=15, seed=8),
    )
    upstream = reconstruction_mse(model, pre.transform(prog.X[test_idx]))
    for downstream_ds in (mono, lymph):
        downstream = reconstruction_mse(model, pre.transform(downstream_ds.X))
        assert downstream <= 3.0 * upstream


def test_embed_dataset_carries_labels_and_fingerprints(mini_lineage):
    _, mono, _ = mini_lineage
    spec = AutoencoderSpec(input_width=mono.width, latent_width=8, encoder_widths=(32,))
    model = Autoencoder(spec, seed=9)
    pre = ExpressionPreprocess.fit(mono.X)
    embedded = embed_dataset(model, mono, pre)
    assert embedded.X.shape == (mono.n, 8)
    assert np.array_equal(embedded.labels, mono.labels)
    assert embedded.manifest["embedding"]["autoencoder_fingerprint"] == model.fingerprint()
