"""Evaluation metrics, report records, and the 2-d PCA projection."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError


def accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise InputError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.size == 0:
        raise InputError("accuracy of an empty prediction set is undefined")
    return float(np.mean(pred == truth))


def f1_binary(pred: np.ndarray, truth: np.ndarray, positive_class: int = 1) -> float:
    """F1 of the positive (disease) class; 0 by convention when P+R = 0."""
    pred, truth = np.asarray(pred), np.asarray(truth)
    tp = int(np.sum((pred == positive_class) & (truth == positive_class)))
    fp = int(np.sum((pred == positive_class) & (truth != positive_class)))
    fn = int(np.sum((pred != positive_class) & (truth == positive_class)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2.0 * precision * recall / (precision + recall))


def confusion_matrix(pred: np.ndarray, truth: np.ndarray, num_classes: int) -> np.ndarray:
    """Counts with truth on rows, prediction on columns."""
    pred, truth = np.asarray(pred, dtype=np.int64), np.asarray(truth, dtype=np.int64)
    for name, a in (("pred", pred), ("truth", truth)):
        if a.size and (a.min() < 0 or a.max() >= num_classes):
            raise InputError(
                f"{name} labels must lie in [0, {num_classes}), got range [{a.min()}, {a.max()}]"
            )
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    return counts


def pca_project(z: np.ndarray, k: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Project onto the top-k principal directions of the centered data.

    Returns (projection (n, k), explained-variance ratios (k,)).
    Component signs are canonicalized so each direction's largest-
    magnitude loading is positive; k beyond the data rank is zero-padded
    with a warning.
    """
    z = np.asarray(z, dtype=np.float64)
    n, d = z.shape
    if n < 2:
        raise InputError(f"PCA needs at least 2 rows, got {n}")
    if k > min(n, d):
        raise InputError(f"k={k} exceeds min(n, d)={min(n, d)}")
    centered = z - z.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    total_var = float(np.sum(centered * centered)) / (n - 1)

    rank_tol = singular[0] * max(n, d) * np.finfo(np.float64).eps if singular.size else 0.0
    rank = int(np.sum(singular > rank_tol))
    keep = min(k, rank)
    if keep < k:
        warnings.warn(
            f"requested {k} components but data rank is {rank}; zero-padding", stacklevel=2
        )

    components = vt[:keep]
    # canonical sign: largest-|loading| coordinate of each direction is positive
    for i in range(keep):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    projection = np.zeros((n, k), dtype=np.float64)
    projection[:, :keep] = centered @ components.T
    ratios = np.zeros(k, dtype=np.float64)
    if total_var > 0:
        ratios[:keep] = (singular[:keep] ** 2 / (n - 1)) / total_var
    return projection, ratios


@dataclass
class EvalReport:
    """One row of the results tables: a model evaluated on a population."""

    model_id: str
    cell_type: str
    transfer: str  # "in-population" | "zero-shot"
    task: str  # "multiclass-7" | "binary"
    train_accuracy: float | None
    test_accuracy: float
    binary_f1: float | None = None
    f1_degenerate: bool = False
    confusion: list[list[int]] | None = None
    fingerprints: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "model_id": self.model_id,
            "cell_type": self.cell_type,
            "transfer": self.transfer,
            "task": self.task,
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "binary_f1": self.binary_f1,
            "f1_degenerate": self.f1_degenerate,
            "confusion": self.confusion,
            "fingerprints": self.fingerprints,
            "notes": self.notes,
        }
        return json.dumps(payload, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        payload = json.loads(text)
        return cls(**payload)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def check_consistency(self) -> None:
        """accuracy must equal trace(confusion)/n when both are present."""
        if self.confusion is None:
            return
        counts = np.asarray(self.confusion)
        n = counts.sum()
        if n == 0:
            return
        if abs(self.test_accuracy - np.trace(counts) / n) > 1e-12:
            raise InputError(
                f"report accuracy {self.test_accuracy} inconsistent with confusion trace "
                f"{np.trace(counts) / n}"
            )
