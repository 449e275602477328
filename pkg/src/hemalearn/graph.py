"""Cosine-similarity sample graphs and the two-layer GCN.

Edges connect sample pairs whose cosine similarity clears a threshold,
capped at a global edge budget (highest similarities win, ties broken by
lexicographic node pair). Propagation uses the symmetric-normalized
adjacency with self-loops over a binary edge set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .data import LabeledDataset
from .errors import ConfigError, DimensionError, InputError, NumericalError
from .fingerprint import array_fingerprint
from .nn import (
    AdamState,
    DropoutLayer,
    GradientTape,
    LinearLayer,
    Tensor,
    adam_step,
    binary_cross_entropy_loss,
    cross_entropy_loss,
    ops,
)
from .rng import named_stream


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|); pairs involving a zero vector score 0 by convention."""
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


def normalize_adjacency(edges: np.ndarray, n: int) -> sparse.csr_matrix:
    """D^-1/2 (A + I) D^-1/2 with self-loops counted in the degrees."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise InputError(f"edge indices must lie in [0, {n}), got {edges.min()}..{edges.max()}")
    degree = np.ones(n, dtype=np.float64)  # self-loop
    np.add.at(degree, edges[:, 0], 1.0)
    np.add.at(degree, edges[:, 1], 1.0)

    diag = np.arange(n, dtype=np.int64)
    rows = np.concatenate([diag, edges[:, 0], edges[:, 1]])
    cols = np.concatenate([diag, edges[:, 1], edges[:, 0]])
    # 1/sqrt(deg_i * deg_j) in one rounding so hand values come out exact
    vals = 1.0 / np.sqrt(degree[rows] * degree[cols])
    return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=np.float64)


@dataclass
class SampleGraph:
    """Node features, deduplicated undirected edges, cached propagation matrix."""

    node_features: np.ndarray  # (n, d) float32
    edges: np.ndarray  # (m, 2) int64, i < j, no self-pairs
    similarities: np.ndarray  # (m,) float64, aligned with edges
    threshold: float
    max_edges: int
    norm_adj: sparse.csr_matrix = field(repr=False)

    @property
    def n(self) -> int:
        return self.node_features.shape[0]

    def fingerprint(self) -> str:
        return array_fingerprint(
            {"node_features": self.node_features, "edges": self.edges.astype(np.int64)}
        )


def build_graph(
    z: np.ndarray,
    threshold: float = 0.4,
    max_edges: int = 1000,
    per_node_cap: int | None = None,
) -> SampleGraph:
    """All pairs at or above the similarity threshold, budgeted.

    When candidates exceed `max_edges`, the highest-similarity pairs are
    kept, ties broken by lexicographic (i, j). An optional per-node
    degree cap filters greedily in the same order.
    """
    z = np.asarray(z, dtype=np.float32)
    if z.ndim != 2 or z.shape[0] < 1:
        raise InputError(f"node features must be a non-empty matrix, got shape {z.shape}")
    if not -1.0 < threshold <= 1.0:
        raise ConfigError(f"threshold must lie in (-1, 1], got {threshold}")
    if max_edges < 0:
        raise ConfigError(f"max_edges must be >= 0, got {max_edges}")

    n = z.shape[0]
    norms = np.linalg.norm(z.astype(np.float64), axis=1)
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = z.astype(np.float64) / safe[:, None]  # zero rows stay zero -> similarity 0
    sims = unit @ unit.T

    ii, jj = np.triu_indices(n, k=1)
    pair_sims = sims[ii, jj]
    keep = pair_sims >= threshold
    ii, jj, pair_sims = ii[keep], jj[keep], pair_sims[keep]

    order = np.lexsort((jj, ii, -pair_sims))
    ii, jj, pair_sims = ii[order], jj[order], pair_sims[order]

    if per_node_cap is not None:
        degree = np.zeros(n, dtype=np.int64)
        chosen = []
        for idx in range(len(ii)):
            if len(chosen) >= max_edges:
                break
            a, b = ii[idx], jj[idx]
            if degree[a] < per_node_cap and degree[b] < per_node_cap:
                chosen.append(idx)
                degree[a] += 1
                degree[b] += 1
        sel = np.asarray(chosen, dtype=np.int64)
        ii, jj, pair_sims = ii[sel], jj[sel], pair_sims[sel]
    elif len(ii) > max_edges:
        ii, jj, pair_sims = ii[:max_edges], jj[:max_edges], pair_sims[:max_edges]

    edges = np.stack([ii, jj], axis=1).astype(np.int64) if len(ii) else np.empty((0, 2), np.int64)
    return SampleGraph(
        node_features=z,
        edges=edges,
        similarities=np.asarray(pair_sims, dtype=np.float64),
        threshold=threshold,
        max_edges=max_edges,
        norm_adj=normalize_adjacency(edges, n),
    )


# ---------------------------------------------------------------------------
# Graph export: plain text so an offline oracle can re-verify edge sets.
# ---------------------------------------------------------------------------


def save_graph(path: str | Path, graph: SampleGraph) -> None:
    lines = [
        "# hemalearn sample graph v1",
        f"# nodes {graph.n}",
        f"# edges {len(graph.edges)}",
        f"# threshold {float(graph.threshold)!r}",
        f"# max_edges {graph.max_edges}",
        f"# fingerprint {graph.fingerprint()}",
    ]
    for (i, j), s in zip(graph.edges, graph.similarities):
        lines.append(f"{i},{j},{float(s)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_graph_edges(path: str | Path) -> tuple[dict, np.ndarray, np.ndarray]:
    """Read back header metadata, edges, and similarities from an export."""
    header: dict = {}
    edges, sims = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# hemalearn sample graph"):
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(" ")
            header[key] = value
        elif line:
            i, j, s = line.split(",")
            edges.append((int(i), int(j)))
            sims.append(float(s))
    return (
        header,
        np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        np.asarray(sims, dtype=np.float64),
    )


@dataclass(frozen=True)
class GCNSpec:
    input_width: int
    num_classes: int
    hidden: int = 128
    dropout: float = 0.3
    bias: bool = True

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return {
            "kind": "gcn",
            "input_width": self.input_width,
            "num_classes": self.num_classes,
            "hidden": self.hidden,
            "dropout": self.dropout,
            "bias": self.bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GCNSpec":
        return cls(
            input_width=d["input_width"],
            num_classes=d["num_classes"],
            hidden=d["hidden"],
            dropout=d["dropout"],
            bias=d["bias"],
        )


class GCNClassifier:
    """Two propagation layers: transform, propagate, ReLU, dropout, repeat."""

    def __init__(self, spec: GCNSpec, seed: int = 0, dtype=np.float32) -> None:
        spec.validate()
        self.spec = spec
        self.dtype = dtype
        self.training = True
        out_width = 1 if spec.num_classes == 2 else spec.num_classes
        self.layer1 = LinearLayer(
            spec.input_width, spec.hidden, rng=named_stream(seed, "gcn/layer1"),
            bias=spec.bias, dtype=dtype,
        )
        self.layer2 = LinearLayer(
            spec.hidden, out_width, rng=named_stream(seed, "gcn/layer2"),
            init="xavier", bias=spec.bias, dtype=dtype,
        )
        self.dropout = DropoutLayer(spec.dropout, named_stream(seed, "gcn/dropout"))

    def train_mode(self) -> None:
        self.training = True

    def eval_mode(self) -> None:
        self.training = False

    def forward(self, graph: SampleGraph) -> Tensor:
        x = graph.node_features
        if x.shape[1] != self.spec.input_width:
            raise DimensionError(
                f"GCN takes width {self.spec.input_width}, got node features {x.shape}"
            )
        adj = graph.norm_adj.astype(self.dtype)
        h = ops.spmm(adj, self.layer1(Tensor(np.asarray(x, dtype=self.dtype))))
        h = self.dropout(ops.relu(h), self.training)
        return ops.spmm(adj, self.layer2(h))

    def parameters(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for prefix, layer in (("layer1", self.layer1), ("layer2", self.layer2)):
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


def predict_gcn(model: GCNClassifier, graph: SampleGraph) -> tuple[np.ndarray, np.ndarray]:
    was_training = model.training
    model.eval_mode()
    try:
        logits = model.forward(graph).data
    finally:
        model.training = was_training
    if logits.shape[1] == 1:
        p1 = ops._sigmoid_array(logits[:, 0].astype(np.float64))
        return (logits[:, 0] > 0).astype(np.int64), np.stack([1.0 - p1, p1], axis=1)
    return np.argmax(logits, axis=1).astype(np.int64), ops.softmax_rows(logits.astype(np.float64))


def train_gcn(
    graph: SampleGraph,
    labels: np.ndarray,
    train_mask: np.ndarray,
    test_mask: np.ndarray,
    spec: GCNSpec,
    config,
) -> tuple[GCNClassifier, list[dict]]:
    """Transductive training: full graph visible, loss on train nodes only."""
    labels = np.asarray(labels, dtype=np.int64)
    train_mask = np.asarray(train_mask, dtype=bool)
    test_mask = np.asarray(test_mask, dtype=bool)
    if train_mask.shape != (graph.n,) or test_mask.shape != (graph.n,):
        raise DimensionError(
            f"masks must cover all {graph.n} nodes, got {train_mask.shape} / {test_mask.shape}"
        )
    if np.any(train_mask & test_mask):
        raise ConfigError("train and test masks overlap")
    if not train_mask.any():
        raise ConfigError("train mask selects no nodes")

    config.validate()
    model = GCNClassifier(spec, seed=config.seed)
    binary = spec.num_classes == 2
    params = model.parameters()
    names = list(params)
    state = AdamState(params)
    train_idx = np.flatnonzero(train_mask)
    test_idx = np.flatnonzero(test_mask)

    history: list[dict] = []
    for epoch in range(config.epochs):
        model.train_mode()
        with GradientTape() as tape:
            logits = model.forward(graph)
            train_logits = ops.take_rows(logits, train_idx)
            if binary:
                loss = binary_cross_entropy_loss(train_logits, labels[train_idx])
            else:
                loss = cross_entropy_loss(train_logits, labels[train_idx])
        value = float(loss.data)
        if not math.isfinite(value):
            raise NumericalError(f"GCN loss became non-finite at epoch {epoch}")
        grads = dict(zip(names, tape.gradients(loss, list(params.values()))))
        adam_step(params, grads, state, config.learning_rate)

        model.eval_mode()
        eval_logits = model.forward(graph).data
        if eval_logits.shape[1] == 1:
            pred = (eval_logits[:, 0] > 0).astype(np.int64)
        else:
            pred = np.argmax(eval_logits, axis=1).astype(np.int64)
        history.append(
            {
                "epoch": epoch,
                "train_loss": value,
                "train_accuracy": float(np.mean(pred[train_idx] == labels[train_idx])),
                "test_accuracy": float(np.mean(pred[test_idx] == labels[test_idx]))
                if test_idx.size
                else float("nan"),
            }
        )
    model.eval_mode()
    return model, history


def subsample_for_graph(
    dataset: LabeledDataset, node_budget: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded node subsample applied before graph construction.

    Returns (features, labels, kept_indices); a no-op when the dataset
    fits the budget.
    """
    if dataset.n <= node_budget:
        idx = np.arange(dataset.n)
    else:
        idx = np.sort(
            named_stream(seed, "gcn/node-subsample").choice(dataset.n, size=node_budget, replace=False)
        )
    return dataset.X[idx], dataset.labels[idx], idx
