"""Orchestration of the full workflow behind the CLI.

Stages: synthesize (or ingest) data, train the autoencoder on the
upstream population, embed every population, train classifiers
in-population, evaluate zero-shot transfer, aggregate reports. Every
stage writes its fully-resolved configuration next to its outputs and
records the fingerprints of whatever produced its inputs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import (
    load_autoencoder_checkpoint,
    load_classifier_checkpoint,
    save_autoencoder_checkpoint,
    save_classifier_checkpoint,
)
from .classifiers import AttentionSpec, FFNSpec, predict, train_classifier
from .data import (
    CellType,
    ExpressionPreprocess,
    LabeledDataset,
    SyntheticConfig,
    binarize_labels,
    generate_synthetic_lineage,
    load_matrix,
    save_matrix,
    split_indices,
    with_manifest,
)
from .embedding import AutoencoderSpec, TrainConfig, embed_dataset, train_autoencoder
from .errors import ConfigError, DimensionError, InputError, IntegrityError
from .fingerprint import file_digest, json_fingerprint
from .graph import GCNSpec, build_graph, predict_gcn, subsample_for_graph, train_gcn
from .metrics import EvalReport, accuracy, confusion_matrix, f1_binary, pca_project

TASKS = ("multiclass-7", "binary")


@dataclass
class RunConfig:
    """Fully-resolved knobs for every stage; defaults follow the protocol
    the models were tuned under (dropout 0.1, 4 heads, hidden 256,
    similarity threshold 0.4, 1000-edge budget, GCN hidden 128 /
    dropout 0.3, lr 1e-3, batch 512, 70/30 split)."""

    seed: int = 0
    task: str = "multiclass-7"
    split_ratio: float = 0.7
    synth: SyntheticConfig = field(default_factory=SyntheticConfig)
    # autoencoder
    ae_latent_width: int = 256
    ae_encoder_widths: tuple[int, ...] = (2048, 1024, 512)
    ae_learning_rate: float = 1e-3
    ae_batch_size: int = 512
    ae_epochs: int = 30
    # feed-forward head
    ffn_hidden1: int = 128
    ffn_hidden2: int = 64
    ffn_dropout: float = 0.1
    # attention head
    attn_hidden_width: int = 256
    attn_heads: int = 4
    attn_ff_widths: tuple[int, ...] = (128,)
    attn_dropout: float = 0.0
    # graph + GCN
    graph_threshold: float = 0.4
    graph_max_edges: int = 1000
    gcn_hidden: int = 128
    gcn_dropout: float = 0.3
    gcn_node_budget: int = 2000
    gcn_epochs: int = 300
    # classifier training
    clf_learning_rate: float = 1e-3
    clf_batch_size: int = 512
    clf_epochs: int = 30

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        self.synth.validate()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synth"] = self.synth.to_dict()
        d["ae_encoder_widths"] = list(self.ae_encoder_widths)
        d["attn_ff_widths"] = list(self.attn_ff_widths)
        return d

    def fingerprint(self) -> str:
        return json_fingerprint(self.to_dict())


# --------------------------------------------------------------------------
# key = value config files ("section.key = value", '#' comments)
# --------------------------------------------------------------------------

_INT = int
_FLOAT = float


def _int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(part) for part in s.split(",") if part.strip())


def _float_tuple(s: str) -> tuple[float, ...]:
    return tuple(float(part) for part in s.split(",") if part.strip())


_CONFIG_KEYS: dict[str, tuple[str, object]] = {
    "seed": ("seed", _INT),
    "task": ("task", str),
    "split_ratio": ("split_ratio", _FLOAT),
    "synth.genes": ("synth.genes", _INT),
    "synth.factor_count": ("synth.factor_count", _INT),
    "synth.progenitor_count": ("synth.progenitor_count", _INT),
    "synth.monocyte_count": ("synth.monocyte_count", _INT),
    "synth.lymphocyte_count": ("synth.lymphocyte_count", _INT),
    "synth.shared_signal_strength": ("synth.shared_signal_strength", _FLOAT),
    "synth.lineage_shift": ("synth.lineage_shift", _FLOAT),
    "synth.noise_sigma": ("synth.noise_sigma", _FLOAT),
    "synth.class_priors": ("synth.class_priors", _float_tuple),
    "ae.latent_width": ("ae_latent_width", _INT),
    "ae.encoder_widths": ("ae_encoder_widths", _int_tuple),
    "ae.learning_rate": ("ae_learning_rate", _FLOAT),
    "ae.batch_size": ("ae_batch_size", _INT),
    "ae.epochs": ("ae_epochs", _INT),
    "ffn.hidden1": ("ffn_hidden1", _INT),
    "ffn.hidden2": ("ffn_hidden2", _INT),
    "ffn.dropout": ("ffn_dropout", _FLOAT),
    "attn.hidden_width": ("attn_hidden_width", _INT),
    "attn.heads": ("attn_heads", _INT),
    "attn.ff_widths": ("attn_ff_widths", _int_tuple),
    "attn.dropout": ("attn_dropout", _FLOAT),
    "graph.threshold": ("graph_threshold", _FLOAT),
    "graph.max_edges": ("graph_max_edges", _INT),
    "gcn.hidden": ("gcn_hidden", _INT),
    "gcn.dropout": ("gcn_dropout", _FLOAT),
    "gcn.node_budget": ("gcn_node_budget", _INT),
    "gcn.epochs": ("gcn_epochs", _INT),
    "clf.learning_rate": ("clf_learning_rate", _FLOAT),
    "clf.batch_size": ("clf_batch_size", _INT),
    "clf.epochs": ("clf_epochs", _INT),
}


def parse_config_text(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        pairs[key.strip()] = value.strip()
    return pairs


def apply_config(config: RunConfig, pairs: dict[str, str]) -> RunConfig:
    synth_updates: dict[str, object] = {}
    updates: dict[str, object] = {}
    for key, raw in pairs.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key '{key}'")
        target, converter = _CONFIG_KEYS[key]
        try:
            value = converter(raw)
        except ValueError as exc:
            raise ConfigError(f"config key '{key}': cannot parse {raw!r}: {exc}") from None
        if target.startswith("synth."):
            synth_updates[target.split(".", 1)[1]] = value
        else:
            updates[target] = value
    if synth_updates:
        updates["synth"] = replace(config.synth, **synth_updates)
    return replace(config, **updates)


def load_run_config(path: str | Path | None, seed: int | None = None) -> RunConfig:
    config = RunConfig()
    if path is not None:
        config = apply_config(config, parse_config_text(Path(path).read_text(encoding="utf-8")))
    if seed is not None:
        config = replace(config, seed=seed, synth=replace(config.synth, seed=seed))
    else:
        config = replace(config, synth=replace(config.synth, seed=config.seed))
    config.validate()
    return config


def _write_resolved_config(out_dir: Path, config: RunConfig, stage: str) -> None:
    payload = {"stage": stage, "config": config.to_dict(), "fingerprint": config.fingerprint()}
    (out_dir / f"{stage}_config.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

_POPULATION_FILES = {
    CellType.PROGENITOR: "progenitor.hlm",
    CellType.MONOCYTE: "monocyte.hlm",
    CellType.LYMPHOCYTE: "lymphocyte.hlm",
}


def cmd_synth(config: RunConfig, out_dir: str | Path) -> dict[str, Path]:
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets = generate_synthetic_lineage(config.synth)
    paths: dict[str, Path] = {}
    for ds in datasets:
        path = out / _POPULATION_FILES[ds.cell_type]
        save_matrix(path, ds)
        paths[ds.cell_type.value] = path
    _write_resolved_config(out, config, "synth")
    return paths


def cmd_train_ae(
    input_path: str | Path,
    config: RunConfig,
    out_dir: str | Path,
    allow_any_celltype: bool = False,
) -> Path:
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_matrix(input_path)
    if dataset.cell_type is not CellType.PROGENITOR and not allow_any_celltype:
        raise InputError(
            f"autoencoder trains on progenitor data; {input_path} holds "
            f"'{dataset.cell_type.value}' (pass --allow-any-celltype to override)"
        )

    train_idx, test_idx = split_indices(dataset.n, config.split_ratio, config.seed)
    preprocess = ExpressionPreprocess.fit(dataset.X[train_idx])
    train_x = preprocess.transform(dataset.X[train_idx])
    test_x = preprocess.transform(dataset.X[test_idx])

    spec = AutoencoderSpec(
        input_width=dataset.width,
        latent_width=config.ae_latent_width,
        encoder_widths=config.ae_encoder_widths,
    )
    train_cfg = TrainConfig(
        learning_rate=config.ae_learning_rate,
        batch_size=config.ae_batch_size,
        epochs=config.ae_epochs,
        seed=config.seed,
        split_ratio=config.split_ratio,
    )
    model, history = train_autoencoder(train_x, spec, train_cfg, val_data=test_x)

    from .fingerprint import array_fingerprint

    ckpt_path = out / "autoencoder.ckpt"
    save_autoencoder_checkpoint(
        ckpt_path,
        model,
        preprocess,
        extra_meta={
            "input_digest": file_digest(input_path),
            "config_fingerprint": config.fingerprint(),
            "train_rows": int(train_idx.size),
            "test_rows": int(test_idx.size),
            # records exactly which rows fed preprocessing + training (no leakage)
            "train_membership_fingerprint": array_fingerprint({"train": train_idx}),
            "final_train_mse": history[-1]["train_mse"],
            "final_val_mse": history[-1].get("val_mse"),
        },
    )
    lines = ["epoch,split,loss"]
    for row in history:
        lines.append(f"{row['epoch']},train,{row['train_mse']:.6f}")
        if "val_mse" in row:
            lines.append(f"{row['epoch']},test,{row['val_mse']:.6f}")
    (out / "ae_history.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_resolved_config(out, config, "train_ae")
    return ckpt_path


def cmd_embed(
    checkpoint_path: str | Path, input_path: str | Path, out_path: str | Path
) -> Path:
    model, preprocess, meta = load_autoencoder_checkpoint(checkpoint_path)
    dataset = load_matrix(input_path)
    if dataset.width != model.spec.input_width:
        raise DimensionError(
            f"checkpoint expects {model.spec.input_width} genes, "
            f"{input_path} has {dataset.width}"
        )
    embedded = embed_dataset(model, dataset, preprocess)
    embedded = with_manifest(
        embedded,
        source_file_digest=file_digest(input_path),
        checkpoint_digest=file_digest(checkpoint_path),
    )
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(out_path, embedded)
    return out_path


def _classifier_spec(kind: str, config: RunConfig, input_width: int, num_classes: int):
    if kind == "ffn":
        return FFNSpec(
            input_width=input_width,
            num_classes=num_classes,
            hidden1=config.ffn_hidden1,
            hidden2=config.ffn_hidden2,
            dropout=config.ffn_dropout,
        )
    if kind in ("attn", "attention"):
        return AttentionSpec(
            token_count=input_width,
            num_classes=num_classes,
            hidden_width=config.attn_hidden_width,
            heads=config.attn_heads,
            ff_widths=config.attn_ff_widths,
            dropout=config.attn_dropout,
        )
    if kind == "gcn":
        return GCNSpec(
            input_width=input_width,
            num_classes=num_classes,
            hidden=config.gcn_hidden,
            dropout=config.gcn_dropout,
        )
    raise ConfigError(f"unknown classifier kind '{kind}', expected ffn, attn, or gcn")


def _task_labels(labels: np.ndarray, task: str) -> tuple[np.ndarray, int]:
    if task == "binary":
        return binarize_labels(labels), 2
    return labels, 7


def _evaluation_report(
    model_id: str,
    dataset: LabeledDataset,
    task: str,
    transfer: str,
    pred: np.ndarray,
    truth: np.ndarray,
    train_accuracy: float | None,
    fingerprints: dict,
    notes: dict | None = None,
) -> EvalReport:
    num_classes = 2 if task == "binary" else 7
    counts = confusion_matrix(pred, truth, num_classes)
    binary_pred = pred if task == "binary" else binarize_labels(pred)
    binary_truth = truth if task == "binary" else binarize_labels(truth)
    f1 = f1_binary(binary_pred, binary_truth)
    degenerate = not np.any(binary_pred == 1) and not np.any(binary_truth == 1)
    report = EvalReport(
        model_id=model_id,
        cell_type=dataset.cell_type.value,
        transfer=transfer,
        task=task,
        train_accuracy=train_accuracy,
        test_accuracy=accuracy(pred, truth),
        binary_f1=f1,
        f1_degenerate=bool(degenerate),
        confusion=counts.tolist(),
        fingerprints=fingerprints,
        notes=notes or {},
    )
    report.check_consistency()
    return report


def cmd_train_clf(
    kind: str,
    embedding_path: str | Path,
    config: RunConfig,
    out_dir: str | Path,
) -> tuple[Path, EvalReport]:
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_matrix(embedding_path)
    embedding_info = dataset.manifest.get("embedding", {})
    task_labels, num_classes = _task_labels(dataset.labels, config.task)

    train_cfg = TrainConfig(
        learning_rate=config.clf_learning_rate,
        batch_size=config.clf_batch_size,
        epochs=config.clf_epochs,
        seed=config.seed,
        split_ratio=config.split_ratio,
    )

    notes: dict = {}
    if kind == "gcn":
        features, labels_kept, kept = subsample_for_graph(
            dataset, config.gcn_node_budget, config.seed
        )
        if kept.size < dataset.n:
            notes["gcn_subsampled_nodes"] = int(kept.size)
        graph = build_graph(features, config.graph_threshold, config.graph_max_edges)
        task_kept, _ = _task_labels(labels_kept, config.task)
        train_idx, test_idx = split_indices(kept.size, config.split_ratio, config.seed)
        train_mask = np.zeros(kept.size, dtype=bool)
        test_mask = np.zeros(kept.size, dtype=bool)
        train_mask[train_idx] = True
        test_mask[test_idx] = True
        gcn_cfg = replace(train_cfg, epochs=config.gcn_epochs)
        spec = _classifier_spec(kind, config, dataset.width, num_classes)
        model, gcn_history = train_gcn(graph, task_kept, train_mask, test_mask, spec, gcn_cfg)
        pred, _ = predict_gcn(model, graph)
        train_accuracy = float(np.mean(pred[train_mask] == task_kept[train_mask]))
        test_pred, test_truth = pred[test_mask], task_kept[test_mask]
        history_rows = gcn_history
        split_payload = {
            "kept_indices": kept.tolist(),
            "train_indices": train_idx.tolist(),
            "test_indices": test_idx.tolist(),
        }
        history_csv = "epoch,split,loss,accuracy\n" + "\n".join(
            f"{r['epoch']},train,{r['train_loss']:.6f},{r['train_accuracy']:.6f}\n"
            f"{r['epoch']},test,nan,{r['test_accuracy']:.6f}"
            for r in history_rows
        ) + "\n"
    else:
        spec = _classifier_spec(kind, config, dataset.width, num_classes)
        model, history = train_classifier(dataset.X, task_labels, spec, train_cfg)
        test_idx = history.test_indices
        pred, _ = predict(model, dataset.X[test_idx])
        test_pred, test_truth = pred, task_labels[test_idx]
        train_accuracy = history.rows[-1]["train_accuracy"]
        notes.update({k: v for k, v in history.metadata.items() if k == "attention_scaling"})
        if history.warnings:
            notes["warnings"] = history.warnings
        split_payload = {
            "train_indices": history.train_indices.tolist(),
            "test_indices": history.test_indices.tolist(),
        }
        history_csv = history.to_csv()

    model_id = {"ffn": "ffn", "attn": "attention", "attention": "attention", "gcn": "gcn"}[kind]
    fingerprints = {
        "embedding_file": file_digest(embedding_path),
        "autoencoder": embedding_info.get("autoencoder_fingerprint"),
        "config": config.fingerprint(),
        "model": model.fingerprint(),
    }
    report = _evaluation_report(
        model_id,
        dataset,
        config.task,
        "in-population",
        test_pred,
        test_truth,
        train_accuracy,
        fingerprints,
        notes,
    )

    ckpt_path = out / f"{model_id}.ckpt"
    save_classifier_checkpoint(
        ckpt_path,
        model,
        extra_meta={
            "task": config.task,
            "autoencoder_fingerprint": embedding_info.get("autoencoder_fingerprint"),
            "embedding_file_digest": file_digest(embedding_path),
            "config_fingerprint": config.fingerprint(),
            "cell_type": dataset.cell_type.value,
        },
    )
    (out / f"{model_id}_history.csv").write_text(history_csv, encoding="utf-8")
    (out / f"{model_id}_split.json").write_text(
        json.dumps(split_payload, sort_keys=True) + "\n", encoding="utf-8"
    )
    report.save(out / f"report_{model_id}_{dataset.cell_type.value}_in-population.json")
    _write_resolved_config(out, config, f"train_clf_{model_id}")
    return ckpt_path, report


def cmd_zero_shot(
    checkpoint_path: str | Path,
    embedding_path: str | Path,
    out_dir: str | Path,
    graph_threshold: float = 0.4,
    graph_max_edges: int = 1000,
) -> EvalReport:
    """Evaluate an upstream-trained classifier on a downstream embedding.

    No parameter updates happen. A 7-class model's predictions are
    binarized (normal vs any disease) for the binary F1 alongside the
    multiclass accuracy; a binary-head model is scored directly.
    """
    model, meta = load_classifier_checkpoint(checkpoint_path)
    dataset = load_matrix(embedding_path)
    embedding_info = dataset.manifest.get("embedding", {})
    expected = meta.get("autoencoder_fingerprint")
    actual = embedding_info.get("autoencoder_fingerprint")
    if expected is not None and expected != actual:
        raise IntegrityError(
            f"embedding {embedding_path} was produced by autoencoder {actual}, "
            f"but the classifier was trained on embeddings from {expected}"
        )

    task = meta.get("task", "multiclass-7")
    truth, _ = _task_labels(dataset.labels, task)
    if meta["kind"] == "gcn":
        graph = build_graph(dataset.X, graph_threshold, graph_max_edges)
        pred, _ = predict_gcn(model, graph)
    else:
        pred, _ = predict(model, dataset.X)

    notes = {"protocol": "binary-head" if task == "binary" else "binarized-multiclass"}
    report = _evaluation_report(
        meta["kind"],
        dataset,
        task,
        "zero-shot",
        pred,
        truth,
        None,
        {
            "embedding_file": file_digest(embedding_path),
            "autoencoder": actual,
            "classifier": meta.get("fingerprint"),
            "classifier_file": file_digest(checkpoint_path),
        },
        notes,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.save(out / f"report_{meta['kind']}_{dataset.cell_type.value}_zero-shot.json")
    return report


def _format_cell(value) -> str:
    if value is None:
        return "-"
    return f"{value:.4f}"


def cmd_report(run_dir: str | Path, out_dir: str | Path | None = None) -> Path:
    """Aggregate every EvalReport under `run_dir` into tables + CSVs."""
    run = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run
    out.mkdir(parents=True, exist_ok=True)

    reports = [EvalReport.load(p) for p in sorted(run.rglob("report_*.json"))]
    gaps: list[str] = []

    lines: list[str] = []
    lines.append("Classification results: upstream population (in-population training)")
    lines.append(f"{'model':<12}{'population':<14}{'train acc':>10}{'test acc':>10}{'binary F1':>11}")
    upstream = [r for r in reports if r.transfer == "in-population" and r.cell_type == "progenitor"]
    if not upstream:
        gaps.append("no in-population progenitor reports found")
    for r in upstream:
        lines.append(
            f"{r.model_id:<12}{r.cell_type:<14}{_format_cell(r.train_accuracy):>10}"
            f"{_format_cell(r.test_accuracy):>10}{_format_cell(r.binary_f1):>11}"
        )
    lines.append("")
    lines.append("Zero-shot transfer to downstream populations")
    lines.append(f"{'model':<12}{'population':<14}{'accuracy':>10}{'binary F1':>11}")
    zero = [r for r in reports if r.transfer == "zero-shot"]
    if not zero:
        gaps.append("no zero-shot reports found")
    for r in zero:
        lines.append(
            f"{r.model_id:<12}{r.cell_type:<14}{_format_cell(r.test_accuracy):>10}"
            f"{_format_cell(r.binary_f1):>11}"
        )
    lines.append("")
    lines.append("Classification results: downstream populations (in-population training)")
    lines.append(f"{'model':<12}{'population':<14}{'train acc':>10}{'test acc':>10}{'binary F1':>11}")
    downstream = [
        r for r in reports if r.transfer == "in-population" and r.cell_type != "progenitor"
    ]
    if not downstream:
        gaps.append("no in-population downstream reports found")
    for r in downstream:
        lines.append(
            f"{r.model_id:<12}{r.cell_type:<14}{_format_cell(r.train_accuracy):>10}"
            f"{_format_cell(r.test_accuracy):>10}{_format_cell(r.binary_f1):>11}"
        )
    if gaps:
        lines.append("")
        lines.append("Gaps:")
        lines.extend(f"  - {g}" for g in gaps)

    report_txt = out / "report.txt"
    report_txt.write_text("\n".join(lines) + "\n", encoding="utf-8")

    csv_lines = ["model,cell_type,transfer,task,train_accuracy,test_accuracy,binary_f1"]
    for r in reports:
        csv_lines.append(
            f"{r.model_id},{r.cell_type},{r.transfer},{r.task},"
            f"{_format_cell(r.train_accuracy)},{_format_cell(r.test_accuracy)},"
            f"{_format_cell(r.binary_f1)}"
        )
    (out / "report.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")

    for emb_path in sorted(run.rglob("*_embedding.hlm")):
        ds = load_matrix(emb_path)
        projection, ratios = pca_project(ds.X, k=2)
        pca_lines = [f"# explained_variance_ratio,{ratios[0]:.6f},{ratios[1]:.6f}"]
        pca_lines.append("x,y,cell_type,label")
        for (x, y), label in zip(projection, ds.labels):
            pca_lines.append(f"{x:.6f},{y:.6f},{ds.cell_type.value},{int(label)}")
        (out / f"pca_{ds.cell_type.value}.csv").write_text(
            "\n".join(pca_lines) + "\n", encoding="utf-8"
        )
    return report_txt
