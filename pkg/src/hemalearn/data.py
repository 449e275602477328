"""Datasets, labels, file format, splits, and the synthetic lineage generator.

The generator mirrors the shape of the real corpus at desk scale: three
cell populations sharing latent factor structure, seven disease states,
and a dial (`shared_signal_strength`) controlling how much of the
label-determining signal lives in directions common to all populations
versus directions private to each one. At strength 1 a classifier fit
upstream transfers perfectly by construction; at strength 0 downstream
labels are independent of everything an upstream model can learn.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .fingerprint import array_fingerprint
from .rng import named_stream


class CellType(str, Enum):
    PROGENITOR = "progenitor"
    MONOCYTE = "monocyte"
    LYMPHOCYTE = "lymphocyte"


#: Stable on-disk codes for cell types (part of the matrix file format).
CELLTYPE_CODES = {CellType.PROGENITOR: 0, CellType.MONOCYTE: 1, CellType.LYMPHOCYTE: 2}
_CELLTYPE_FROM_CODE = {v: k for k, v in CELLTYPE_CODES.items()}


class DiseaseLabel(IntEnum):
    """Seven disease states; NORMAL is 0 so binarization is idempotent."""

    NORMAL = 0
    MDS = 1
    CYTOPENIA = 2
    CMML = 3
    SMM_AND_MDS = 4
    MPN_AND_MDS = 5
    CMML_AND_MDS = 6


NUM_CLASSES = len(DiseaseLabel)


def check_matrix(x: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate an externally supplied matrix: 2-d, finite everywhere."""
    a = np.asarray(x)
    if a.ndim != 2:
        raise InputError(f"{name} must be 2-d, got shape {a.shape}")
    bad = ~np.isfinite(a)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise InputError(f"{name} contains a non-finite entry at row {r}, col {c}")
    return a


@dataclass
class LabeledDataset:
    """Expression or embedding matrix with per-row disease labels."""

    X: np.ndarray  # (n, G) float32
    labels: np.ndarray  # (n,) int64 in [0, 7)
    cell_type: CellType
    manifest: dict = field(default_factory=dict)
    #: Shared-factor coordinates for synthetic data (never serialized).
    factors: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.X = np.ascontiguousarray(self.X, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.X.shape[0],):
            raise InputError(
                f"label count {self.labels.shape} does not match rows {self.X.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def width(self) -> int:
        return self.X.shape[1]

    def fingerprint(self) -> str:
        return array_fingerprint({"X": self.X, "labels": self.labels})


@dataclass(frozen=True)
class SyntheticConfig:
    """Desk-scale surrogate for the real corpus.

    Counts default to a ~10 : 1 : 0.2 progenitor/monocyte/lymphocyte
    ratio. `factor_count` must be >= 6: three shared label factors,
    three population-private label factors, and the remainder shared
    nuisance factors. Class priors default to half normal, half spread
    over the six disease states, which keeps the binary chance-level F1
    well below the calibrated-transfer regime.
    """

    genes: int = 2000
    factor_count: int = 16
    progenitor_count: int = 20000
    monocyte_count: int = 2000
    lymphocyte_count: int = 400
    shared_signal_strength: float = 1.0
    lineage_shift: float = 0.5
    noise_sigma: float = 0.25
    class_priors: tuple[float, ...] = (0.5,) + (1.0 / 12,) * 6
    seed: int = 0

    def validate(self) -> None:
        if self.genes < 1:
            raise ConfigError(f"genes must be >= 1, got {self.genes}")
        if self.factor_count < 6:
            raise ConfigError(
                f"factor_count must be >= 6 (3 shared + 3 private label factors), "
                f"got {self.factor_count}"
            )
        if min(self.progenitor_count, self.monocyte_count, self.lymphocyte_count) < 1:
            raise ConfigError("population counts must be >= 1")
        if not 0.0 <= self.shared_signal_strength <= 1.0:
            raise ConfigError(
                f"shared_signal_strength must lie in [0, 1], got {self.shared_signal_strength}"
            )
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        priors = np.asarray(self.class_priors, dtype=np.float64)
        if priors.shape != (NUM_CLASSES,):
            raise ConfigError(
                f"class_priors must have {NUM_CLASSES} entries, got {priors.shape}"
            )
        if priors.min() < 0 or abs(priors.sum() - 1.0) > 1e-6:
            raise ConfigError(
                f"class_priors must be non-negative and sum to 1 +- 1e-6, got {list(priors)}"
            )

    def to_dict(self) -> dict:
        return {
            "genes": self.genes,
            "factor_count": self.factor_count,
            "progenitor_count": self.progenitor_count,
            "monocyte_count": self.monocyte_count,
            "lymphocyte_count": self.lymphocyte_count,
            "shared_signal_strength": self.shared_signal_strength,
            "lineage_shift": self.lineage_shift,
            "noise_sigma": self.noise_sigma,
            "class_priors": list(self.class_priors),
            "seed": self.seed,
        }


# Expression model constants: per-gene baselines are drawn from a shifted
# exponential so values are expression-like (non-negative up to a
# vanishing Gaussian tail), and the transform stays affine so the
# noise-free data matrix has rank <= factor_count + 1 exactly.
_EXPR_SCALE = 0.3
_BASELINE_SHIFT = 6.0
_BASELINE_EXP_SCALE = 1.0
_LABEL_MARGIN = 1.0
_LABEL_JITTER = 0.5

# Three sign bits give eight cells; NORMAL owns two of them.
_CELL_TO_LABEL = np.array([0, 1, 2, 3, 4, 5, 6, 0], dtype=np.int64)


def _unit_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    m = rng.standard_normal((rows, cols))
    return (m / np.linalg.norm(m, axis=0, keepdims=True)).astype(np.float32)


def _cells_to_signs(cells: np.ndarray) -> np.ndarray:
    bits = (cells[:, None] >> np.arange(3)) & 1
    return (2 * bits - 1).astype(np.float32)


def label_from_sign_cell(signs: np.ndarray) -> np.ndarray:
    """Deterministic map from 3-bit sign patterns to the 7 labels."""
    bits = (np.asarray(signs) > 0).astype(np.int64)
    cells = bits @ np.array([1, 2, 4], dtype=np.int64)
    return _CELL_TO_LABEL[cells]


def _population(
    name: str,
    count: int,
    config: SyntheticConfig,
    shared_loadings: np.ndarray,
    private_loadings: np.ndarray,
    mean_shift: np.ndarray,
    baseline: np.ndarray,
) -> LabeledDataset:
    rng = named_stream(config.seed, f"synthetic/{name}")
    priors = np.asarray(config.class_priors, dtype=np.float64)
    labels = rng.choice(NUM_CLASSES, size=count, p=priors)
    # NORMAL maps to sign cells 0 and 7; pick one per sample.
    coin = rng.integers(0, 2, size=count)
    cells = np.where(labels == 0, coin * 7, labels)
    signs = _cells_to_signs(cells)

    s = config.shared_signal_strength
    shared_margin = _LABEL_MARGIN + np.abs(rng.normal(0.0, _LABEL_JITTER, size=(count, 3)))
    private_margin = _LABEL_MARGIN + np.abs(rng.normal(0.0, _LABEL_JITTER, size=(count, 3)))
    shared_noise = rng.standard_normal((count, 3))
    private_noise = rng.standard_normal((count, 3))

    shared_label = (s * signs * shared_margin + (1.0 - s) * shared_noise).astype(np.float32)
    private_label = ((1.0 - s) * signs * private_margin + s * private_noise).astype(np.float32)
    rest = rng.standard_normal((count, config.factor_count - 6)).astype(np.float32)

    raw = shared_label @ shared_loadings[:, :3].T
    raw += rest @ shared_loadings[:, 3:].T
    raw += private_label @ private_loadings.T
    raw += mean_shift
    if config.noise_sigma > 0:
        raw += config.noise_sigma * rng.standard_normal((count, config.genes), dtype=np.float32)

    x = baseline + _EXPR_SCALE * raw
    manifest = {
        "source": "synthetic-lineage",
        "cell_type": name,
        "config": config.to_dict(),
    }
    return LabeledDataset(
        X=x,
        labels=labels,
        cell_type=CellType(name),
        manifest=manifest,
        factors=np.hstack([shared_label, rest]),
    )


def generate_synthetic_lineage(
    config: SyntheticConfig,
) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Generate progenitor, monocyte, and lymphocyte datasets.

    All populations share the loading directions of the shared factors;
    each has its own private label directions and (downstream only) a
    mean shift of magnitude `lineage_shift`. The exposed `factors`
    attribute holds the shared-factor coordinates, label factors first.
    """
    config.validate()
    rng = named_stream(config.seed, "synthetic/structure")
    g, k = config.genes, config.factor_count
    shared_loadings = _unit_columns(rng, g, k - 3)  # 3 label + (k-6) nuisance columns
    baseline = (
        _BASELINE_SHIFT + rng.exponential(_BASELINE_EXP_SCALE, size=g)
    ).astype(np.float32)

    populations = []
    for name, count, shifted in (
        (CellType.PROGENITOR.value, config.progenitor_count, False),
        (CellType.MONOCYTE.value, config.monocyte_count, True),
        (CellType.LYMPHOCYTE.value, config.lymphocyte_count, True),
    ):
        private = _unit_columns(rng, g, 3)
        if shifted:
            direction = rng.standard_normal(g)
            direction /= np.linalg.norm(direction)
            shift = (config.lineage_shift * direction).astype(np.float32)
        else:
            shift = np.zeros(g, dtype=np.float32)
        populations.append(
            _population(name, count, config, shared_loadings, private, shift, baseline)
        )
    return tuple(populations)


def split_indices(n: int, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random partition into floor(ratio*n) train rows and the rest."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    if n < 2:
        raise InputError(f"cannot split {n} rows")
    perm = named_stream(seed, "split").permutation(n)
    n_train = int(np.floor(ratio * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def split(
    dataset: LabeledDataset, ratio: float = 0.7, seed: int = 0
) -> tuple[LabeledDataset, LabeledDataset]:
    """70/30-style row split; manifests record membership fingerprints."""
    train_idx, test_idx = split_indices(dataset.n, ratio, seed)
    parent = dataset.fingerprint()

    def take(idx: np.ndarray, role: str) -> LabeledDataset:
        manifest = dict(dataset.manifest)
        manifest["split"] = {
            "role": role,
            "ratio": ratio,
            "seed": seed,
            "parent_fingerprint": parent,
            "membership_fingerprint": array_fingerprint({"indices": idx}),
        }
        return LabeledDataset(
            X=dataset.X[idx],
            labels=dataset.labels[idx],
            cell_type=dataset.cell_type,
            manifest=manifest,
            factors=None if dataset.factors is None else dataset.factors[idx],
        )

    return take(train_idx, "train"), take(test_idx, "test")


def binarize_labels(labels: np.ndarray) -> np.ndarray:
    """NORMAL -> 0, every disease state -> 1. Idempotent."""
    return (np.asarray(labels) != DiseaseLabel.NORMAL).astype(np.int64)


class ExpressionPreprocess:
    """log1p then per-gene standardization.

    Fit on the upstream train split only; the fitted parameters travel
    inside the autoencoder checkpoint so downstream populations are
    transformed identically. Negative inputs are clipped to zero before
    log1p (expression is non-negative; the synthetic generator leaves a
    vanishing Gaussian tail below zero).
    """

    def __init__(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.mean = np.asarray(mean, dtype=np.float32)
        self.std = np.asarray(std, dtype=np.float32)

    @classmethod
    def fit(cls, x: np.ndarray) -> "ExpressionPreprocess":
        logged = np.log1p(np.maximum(np.asarray(x, dtype=np.float32), 0))
        mean = logged.mean(axis=0)
        std = np.maximum(logged.std(axis=0), 1e-6)
        return cls(mean, std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        logged = np.log1p(np.maximum(np.asarray(x, dtype=np.float32), 0))
        return (logged - self.mean) / self.std

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {"preprocess_mean": self.mean, "preprocess_std": self.std}

    @classmethod
    def from_state_arrays(cls, arrays: dict[str, np.ndarray]) -> "ExpressionPreprocess":
        return cls(arrays["preprocess_mean"], arrays["preprocess_std"])

    def fingerprint(self) -> str:
        return array_fingerprint(self.state_arrays())


# ---------------------------------------------------------------------------
# Native matrix file format
#
#   magic "HLMX" | version u32 | rows u64 | cols u64 | cell_type u8
#   | labels u8[rows] | manifest_len u64 | manifest UTF-8 JSON
#   | payload float32-LE[rows*cols]
#
# Everything little-endian; the payload is row-major. The format is
# deliberately dumb so an offline oracle can re-read it with a few lines
# of struct/frombuffer.
# ---------------------------------------------------------------------------

MATRIX_MAGIC = b"HLMX"
MATRIX_VERSION = 1
_HEADER = struct.Struct("<4sIQQB")


def save_matrix(path: str | Path, dataset: LabeledDataset) -> None:
    check_matrix(dataset.X, "dataset matrix")
    if dataset.labels.min(initial=0) < 0 or dataset.labels.max(initial=0) > 255:
        raise InputError("labels must fit in a byte")
    manifest_bytes = json.dumps(dataset.manifest, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(dataset.X, dtype="<f4")
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                MATRIX_MAGIC,
                MATRIX_VERSION,
                dataset.n,
                dataset.width,
                CELLTYPE_CODES[dataset.cell_type],
            )
        )
        f.write(dataset.labels.astype("<u1").tobytes())
        f.write(struct.pack("<Q", len(manifest_bytes)))
        f.write(manifest_bytes)
        f.write(payload.tobytes())


def load_matrix(path: str | Path) -> LabeledDataset:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise InputError(f"{path}: too short to be a matrix file ({len(blob)} bytes)")
    magic, version, rows, cols, cell_code = _HEADER.unpack_from(blob, 0)
    if magic != MATRIX_MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
    if version != MATRIX_VERSION:
        raise InputError(f"{path}: unsupported format version {version}")
    if cell_code not in _CELLTYPE_FROM_CODE:
        raise InputError(f"{path}: unknown cell-type code {cell_code}")

    offset = _HEADER.size
    if len(blob) < offset + rows + 8:
        raise InputError(f"{path}: truncated label block")
    labels = np.frombuffer(blob, dtype="<u1", count=rows, offset=offset).astype(np.int64)
    offset += rows
    (manifest_len,) = struct.unpack_from("<Q", blob, offset)
    offset += 8
    expected = offset + manifest_len + rows * cols * 4
    if len(blob) != expected:
        raise InputError(
            f"{path}: truncated or padded file, expected {expected} bytes, got {len(blob)}"
        )
    manifest = json.loads(blob[offset : offset + manifest_len].decode("utf-8")) if manifest_len else {}
    offset += manifest_len
    x = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset).reshape(rows, cols)
    bad = ~np.isfinite(x)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise InputError(f"{path}: non-finite entry at row {r}, col {c}")
    return LabeledDataset(
        X=x.copy(),
        labels=labels,
        cell_type=_CELLTYPE_FROM_CODE[cell_code],
        manifest=manifest,
    )


def with_manifest(dataset: LabeledDataset, **extra) -> LabeledDataset:
    """Copy of the dataset with manifest entries merged in."""
    manifest = dict(dataset.manifest)
    manifest.update(extra)
    return replace(dataset, manifest=manifest)


def export_labels_csv(path: str | Path, dataset: LabeledDataset) -> None:
    """Row index, label code, label name, cell type; for external tooling."""
    lines = ["row,label,label_name,cell_type"]
    for i, code in enumerate(dataset.labels):
        name = DiseaseLabel(int(code)).name if 0 <= code < NUM_CLASSES else str(int(code))
        lines.append(f"{i},{int(code)},{name},{dataset.cell_type.value}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
