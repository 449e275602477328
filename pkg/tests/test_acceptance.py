"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria by number:
  1 gradient suite          5 in-population classification
  2 attention invariants    6 zero-shot calibration
  3 graph oracle            7 dropout overfitting direction
  4 autoencoder capacity    8 determinism + metric cross-checks
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np
import pytest

from hemalearn.classifiers import (
    AttentionClassifier,
    AttentionSpec,
    FFNClassifier,
    FFNSpec,
    multi_head_attention,
    predict,
    scaled_dot_attention,
    train_classifier,
)
from hemalearn.data import (
    ExpressionPreprocess,
    SyntheticConfig,
    binarize_labels,
    generate_synthetic_lineage,
    label_from_sign_cell,
    split_indices,
)
from hemalearn.embedding import (
    Autoencoder,
    AutoencoderSpec,
    TrainConfig,
    reconstruction_mse,
    train_autoencoder,
)
from hemalearn.graph import GCNClassifier, GCNSpec, build_graph, normalize_adjacency, train_gcn
from hemalearn.metrics import accuracy, confusion_matrix, f1_binary
from hemalearn.nn import GradientTape, LinearLayer, Tensor, finite_difference_check, ops
from hemalearn.nn.losses import cross_entropy_loss, mse_loss
from hemalearn.pipeline import (
    cmd_embed,
    cmd_report,
    cmd_synth,
    cmd_train_ae,
    cmd_train_clf,
    cmd_zero_shot,
    load_run_config,
)

from test_graph import brute_force_edges


def _report(criterion: int, name: str, passed: bool, detail: str) -> None:
    verdict = "PASS" if passed else "FAIL"
    print(f"[ACCEPTANCE {criterion}] {name}: {detail} -> {verdict}")
    assert passed, f"criterion {criterion} ({name}): {detail}"


# -- 1: gradient suite -------------------------------------------------------


def test_acceptance_1_gradient_suite():
    started = time.perf_counter()
    rng = np.random.default_rng(0)
    errors: dict[str, float] = {}

    ae = Autoencoder(
        AutoencoderSpec(input_width=12, latent_width=3, encoder_widths=(8,)),
        seed=1,
        dtype=np.float64,
    )
    ae.train_mode()
    x_ae = Tensor(rng.normal(size=(6, 12)))

    def ae_loss():
        return mse_loss(ae.decode_tensor(ae.encode_tensor(x_ae)), x_ae.data)

    errors["autoencoder"] = finite_difference_check(ae_loss, ae.parameters(), eps=1e-3)

    ffn = FFNClassifier(
        FFNSpec(input_width=7, num_classes=4, hidden1=9, hidden2=6, dropout=0.0),
        seed=2,
        dtype=np.float64,
    )
    ffn.train_mode()
    x_ffn = Tensor(rng.normal(size=(8, 7)))
    y_ffn = rng.integers(0, 4, size=8)

    def ffn_loss():
        return cross_entropy_loss(ffn.forward(x_ffn), y_ffn)

    errors["ffn_dropout0"] = finite_difference_check(ffn_loss, ffn.parameters(), eps=1e-3)

    frozen = FFNClassifier(
        FFNSpec(input_width=7, num_classes=4, hidden1=9, hidden2=6, dropout=0.5),
        seed=3,
        dtype=np.float64,
    )
    frozen.train_mode()
    frozen.drop1.fixed_mask = rng.random((8, 9)) >= 0.5
    frozen.drop2.fixed_mask = rng.random((8, 6)) >= 0.5

    def frozen_loss():
        return cross_entropy_loss(frozen.forward(x_ffn), y_ffn)

    errors["ffn_frozen_mask"] = finite_difference_check(frozen_loss, frozen.parameters(), eps=1e-3)

    attn = AttentionClassifier(
        AttentionSpec(token_count=6, num_classes=3, hidden_width=8, heads=2, ff_widths=(10,)),
        seed=4,
        dtype=np.float64,
    )
    attn.train_mode()
    x_attn = Tensor(rng.normal(size=(5, 6)))
    y_attn = rng.integers(0, 3, size=5)

    def attn_loss():
        return cross_entropy_loss(attn.forward(x_attn), y_attn)

    errors["attention"] = finite_difference_check(attn_loss, attn.parameters(), eps=1e-3)

    z = rng.normal(size=(9, 5)).astype(np.float32)
    graph = build_graph(z, threshold=0.0, max_edges=12)
    gcn = GCNClassifier(
        GCNSpec(input_width=5, num_classes=3, hidden=6, dropout=0.0), seed=5, dtype=np.float64
    )
    gcn.train_mode()
    y_gcn = rng.integers(0, 3, size=9)
    mask = np.arange(6)

    def gcn_loss():
        logits = ops.take_rows(gcn.forward(graph), mask)
        return cross_entropy_loss(logits, y_gcn[mask])

    errors["gcn"] = finite_difference_check(gcn_loss, gcn.parameters(), eps=1e-3)

    elapsed = time.perf_counter() - started
    worst = max(errors.values())
    detail = (
        ", ".join(f"{k}={v:.2e}" for k, v in errors.items()) + f" (worst {worst:.2e}, {elapsed:.1f}s)"
    )
    _report(1, "gradient suite", worst < 1e-3 and elapsed < 120.0, detail)


# -- 2: attention invariants -------------------------------------------------


def test_acceptance_2_attention_invariants():
    rng = np.random.default_rng(1)

    spec = AttentionSpec(token_count=10, num_classes=3, hidden_width=12, heads=3)
    model = AttentionClassifier(spec, seed=6)
    model.eval_mode()
    _, weights = model.forward(
        Tensor(rng.normal(size=(4, 10)).astype(np.float32)), return_attention=True
    )
    row_sum_err = float(np.max(np.abs(weights.data.sum(axis=-1) - 1.0)))

    d = 8
    layers = [
        LinearLayer(d, d, rng=np.random.default_rng(20 + i), init="xavier", bias=False)
        for i in range(4)
    ]
    layers[3].weight.data = np.eye(d, dtype=np.float32)
    x = Tensor(rng.normal(size=(7, d)).astype(np.float32))
    merged = multi_head_attention(x, *layers, heads=1).data
    direct = scaled_dot_attention(layers[0](x), layers[1](x), layers[2](x)).data
    degeneracy_exact = bool(np.array_equal(merged, direct))

    perm = np.random.default_rng(2).permutation(7)
    base = multi_head_attention(Tensor(x.data), *layers, heads=2).data
    permuted = multi_head_attention(Tensor(x.data[perm]), *layers, heads=2).data
    equivariance_err = float(np.max(np.abs(base[perm] - permuted)))

    passed = row_sum_err <= 1e-6 and degeneracy_exact and equivariance_err <= 1e-5
    _report(
        2,
        "attention invariants",
        passed,
        f"row-sum err {row_sum_err:.2e}, h=1 exact {degeneracy_exact}, "
        f"permutation err {equivariance_err:.2e}",
    )


# -- 3: graph oracle ---------------------------------------------------------


def test_acceptance_3_graph_oracle():
    mismatches = 0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        z = rng.normal(size=(50, 8))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        z = z.astype(np.float32)
        graph = build_graph(z, threshold=0.4, max_edges=10)
        oracle = [list(e) for e in brute_force_edges(z, 0.4, 10)]
        if graph.edges.tolist() != oracle:
            mismatches += 1

    single = normalize_adjacency(np.empty((0, 2)), 1).toarray()
    path = normalize_adjacency(np.array([[0, 1]]), 2).toarray()
    complete = normalize_adjacency(
        np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]), 4
    ).toarray()
    hand_exact = (
        np.array_equal(single, [[1.0]])
        and np.array_equal(path, [[0.5, 0.5], [0.5, 0.5]])
        and np.array_equal(complete, np.full((4, 4), 0.25))
    )

    _report(
        3,
        "graph oracle",
        mismatches == 0 and hand_exact,
        f"20-seed brute-force mismatches {mismatches}, hand adjacency exact {hand_exact}",
    )


# -- 4: autoencoder capacity -------------------------------------------------


def test_acceptance_4_autoencoder_capacity():
    started = time.perf_counter()
    rng = np.random.default_rng(5)
    n, g, rank = 2000, 80, 4
    data = (rng.normal(size=(n, rank)) @ rng.normal(size=(rank, g)) / np.sqrt(rank)).astype(
        np.float32
    )
    data += 0.15 * rng.normal(size=(n, g)).astype(np.float32)

    centered = data - data.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    truncated = (u[:, :rank] * s[:rank]) @ vt[:rank]
    pca_mse = float(np.mean((centered - truncated) ** 2))

    spec = AutoencoderSpec(input_width=g, latent_width=8, encoder_widths=(64,))
    model, _ = train_autoencoder(
        data, spec, TrainConfig(learning_rate=2e-3, batch_size=128, epochs=50, seed=5)
    )
    ae_mse = reconstruction_mse(model, data)
    elapsed = time.perf_counter() - started
    _report(
        4,
        "autoencoder capacity",
        ae_mse <= 2.0 * pca_mse and elapsed < 300.0,
        f"AE mse {ae_mse:.5f} vs PCA rank-4 oracle {pca_mse:.5f} "
        f"(ratio {ae_mse / pca_mse:.2f}, {elapsed:.1f}s)",
    )


# -- 5: in-population classification on the default synthetic shape ----------


def test_acceptance_5_in_population_classification():
    started = time.perf_counter()
    config = SyntheticConfig(shared_signal_strength=1.0, seed=42)  # default 20000/2000/400 x 2000
    prog, mono, _ = generate_synthetic_lineage(config)

    train_idx, _ = split_indices(prog.n, 0.7, 42)
    preprocess = ExpressionPreprocess.fit(prog.X[train_idx])
    ae, _ = train_autoencoder(
        preprocess.transform(prog.X[train_idx]),
        AutoencoderSpec(input_width=config.genes, latent_width=64, encoder_widths=(128, 64)),
        TrainConfig(batch_size=512, epochs=15, seed=42),
    )
    z_prog = ae.encode(preprocess.transform(prog.X))
    z_mono = ae.encode(preprocess.transform(mono.X))

    _, ffn_history = train_classifier(
        z_prog,
        prog.labels,
        FFNSpec(input_width=64, num_classes=7, dropout=0.1),
        TrainConfig(batch_size=512, epochs=20, seed=42),
    )
    ffn_acc = ffn_history.rows[-1]["test_accuracy"]

    _, attn_history = train_classifier(
        z_prog,
        prog.labels,
        AttentionSpec(token_count=64, num_classes=7, hidden_width=128, heads=4, ff_widths=(128,)),
        TrainConfig(batch_size=512, epochs=5, seed=42),
    )
    attn_acc = attn_history.rows[-1]["test_accuracy"]

    graph = build_graph(z_mono, threshold=0.4, max_edges=1000)
    gcn_train, gcn_test = split_indices(mono.n, 0.7, 42)
    train_mask = np.zeros(mono.n, dtype=bool)
    test_mask = np.zeros(mono.n, dtype=bool)
    train_mask[gcn_train] = True
    test_mask[gcn_test] = True
    _, gcn_history = train_gcn(
        graph,
        mono.labels,
        train_mask,
        test_mask,
        GCNSpec(input_width=64, num_classes=7, hidden=128, dropout=0.3),
        TrainConfig(epochs=300, seed=42),
    )
    gcn_acc = gcn_history[-1]["test_accuracy"]

    elapsed = time.perf_counter() - started
    passed = ffn_acc > 0.95 and attn_acc > 0.95 and gcn_acc > 0.90 and elapsed < 1200.0
    _report(
        5,
        "in-population classification",
        passed,
        f"FFN {ffn_acc:.4f} (>0.95), attention {attn_acc:.4f} (>0.95), "
        f"GCN {gcn_acc:.4f} (>0.90), {elapsed:.0f}s (<1200s)",
    )


# -- 6: zero-shot calibration ------------------------------------------------


def _zero_shot_f1(strength: float, seed: int) -> tuple[float, float]:
    """Returns (downstream binary F1, chance-level oracle for the run)."""
    config = SyntheticConfig(
        genes=300,
        factor_count=8,
        progenitor_count=3000,
        monocyte_count=600,
        lymphocyte_count=300,
        shared_signal_strength=strength,
        noise_sigma=0.25,
        seed=seed,
    )
    prog, mono, _ = generate_synthetic_lineage(config)
    train_idx, _ = split_indices(prog.n, 0.7, seed)
    preprocess = ExpressionPreprocess.fit(prog.X[train_idx])
    ae, _ = train_autoencoder(
        preprocess.transform(prog.X[train_idx]),
        AutoencoderSpec(input_width=300, latent_width=32, encoder_widths=(64,)),
        TrainConfig(batch_size=128, epochs=12, seed=seed),
    )
    model, _ = train_classifier(
        ae.encode(preprocess.transform(prog.X)),
        prog.labels,
        FFNSpec(input_width=32, num_classes=7, dropout=0.1),
        TrainConfig(batch_size=128, epochs=20, seed=seed),
    )
    pred, _ = predict(model, ae.encode(preprocess.transform(mono.X)))
    binary_pred = binarize_labels(pred)
    binary_truth = binarize_labels(mono.labels)
    f1 = f1_binary(binary_pred, binary_truth)
    # chance oracle: prediction independent of truth with the observed rates
    p, q = binary_truth.mean(), binary_pred.mean()
    chance = 2.0 * p * q / (p + q) if p + q > 0 else 0.0
    return f1, float(chance)


def test_acceptance_6_zero_shot_calibration():
    seeds = (1, 2, 3, 4, 5)
    results = {s: [_zero_shot_f1(s, seed) for seed in seeds] for s in (0.0, 0.5, 1.0)}
    means = {s: float(np.mean([f1 for f1, _ in runs])) for s, runs in results.items()}

    strong = all(f1 > 0.9 for f1, _ in results[1.0])
    at_chance = all(abs(f1 - chance) <= 0.1 for f1, chance in results[0.0])
    monotone = means[0.0] <= means[0.5] <= means[1.0]

    detail = (
        f"mean F1 by strength {{0: {means[0.0]:.3f}, 0.5: {means[0.5]:.3f}, 1: {means[1.0]:.3f}}}, "
        f"strength-1 all >0.9: {strong}, strength-0 within 0.1 of chance: {at_chance}, "
        f"monotone: {monotone}"
    )
    _report(6, "zero-shot calibration", strong and at_chance and monotone, detail)


# -- 7: dropout overfitting direction ----------------------------------------


def _generalization_gap(dropout: float, seed: int) -> float:
    rng = np.random.default_rng(1000 + seed)
    n, d = 220, 32
    x = rng.normal(size=(n, d)).astype(np.float32)
    y = label_from_sign_cell(x[:, :3])
    flip = rng.random(n) < 0.25  # label noise rewards memorization
    y[flip] = rng.integers(0, 7, size=int(flip.sum()))
    spec = FFNSpec(input_width=d, num_classes=7, hidden1=64, hidden2=32, dropout=dropout)
    _, history = train_classifier(x, y, spec, TrainConfig(epochs=60, batch_size=32, seed=seed))
    last = history.rows[-1]
    return last["train_accuracy"] - last["test_accuracy"]


def test_acceptance_7_dropout_overfitting_direction():
    wins = sum(
        _generalization_gap(0.0, seed) > _generalization_gap(0.1, seed) for seed in range(10)
    )
    _report(
        7,
        "dropout overfitting direction",
        wins >= 8,
        f"gap(0.0) > gap(0.1) in {wins}/10 seeded runs (need >= 8)",
    )


# -- 8: determinism + metric cross-checks ------------------------------------

_RERUN_CONFIG = """
seed = 4
synth.genes = 60
synth.factor_count = 7
synth.progenitor_count = 260
synth.monocyte_count = 60
synth.lymphocyte_count = 40
ae.latent_width = 8
ae.encoder_widths = 24
ae.batch_size = 64
ae.epochs = 5
ffn.hidden1 = 16
ffn.hidden2 = 8
clf.batch_size = 64
clf.epochs = 5
"""


def _pipeline_artifacts(base: Path) -> dict[str, bytes]:
    base.mkdir(parents=True, exist_ok=True)
    cfg = base / "cfg.txt"
    cfg.write_text(_RERUN_CONFIG, encoding="utf-8")
    config = load_run_config(cfg)
    paths = cmd_synth(config, base / "data")
    ckpt = cmd_train_ae(paths["progenitor"], config, base / "ae")
    emb_prog = cmd_embed(ckpt, paths["progenitor"], base / "emb" / "progenitor_embedding.hlm")
    emb_mono = cmd_embed(ckpt, paths["monocyte"], base / "emb" / "monocyte_embedding.hlm")
    clf, _ = cmd_train_clf("ffn", emb_prog, config, base / "clf")
    cmd_zero_shot(clf, emb_mono, base / "zs")
    report = cmd_report(base, base / "report")
    return {
        "progenitor.hlm": paths["progenitor"].read_bytes(),
        "autoencoder.ckpt": ckpt.read_bytes(),
        "progenitor_embedding.hlm": emb_prog.read_bytes(),
        "ffn.ckpt": clf.read_bytes(),
        "report.txt": report.read_bytes(),
        "report.csv": (base / "report" / "report.csv").read_bytes(),
    }


def test_acceptance_8_determinism_and_metric_cross_checks(tmp_path):
    first = _pipeline_artifacts(tmp_path / "run1")
    second = _pipeline_artifacts(tmp_path / "run2")
    identical = [name for name in first if first[name] == second[name]]
    byte_identical = len(identical) == len(first)

    rng = np.random.default_rng(11)
    pred = rng.integers(0, 7, size=500)
    truth = rng.integers(0, 7, size=500)
    counts = confusion_matrix(pred, truth, 7)
    trace_consistent = accuracy(pred, truth) == np.trace(counts) / 500

    f1_exact = (
        f1_binary([1, 1, 1, 0, 0], [1, 1, 0, 1, 0]) == 2 / 3
        and f1_binary([1, 0, 1], [1, 0, 1]) == 1.0
        and f1_binary([0, 0], [0, 0]) == 0.0
    )

    passed = byte_identical and trace_consistent and f1_exact
    _report(
        8,
        "determinism + metric cross-checks",
        passed,
        f"byte-identical artifacts {len(identical)}/{len(first)}, "
        f"accuracy==trace/n {trace_consistent}, F1 hand cases exact {f1_exact}",
    )
