"""One-file converter: .h5ad (HDF5) to hemalearn's native matrix format.

Selects the cell populations named in a user-supplied cell-type mapping
CSV, maps source disease annotations onto the seven disease states
through a label mapping CSV, and writes one matrix file per selected
population. Sparse-to-dense expansion happens in row chunks so memory
stays bounded by chunk size, not by the source matrix.

The converter is a leaf: the main package never imports it. Integration
runs entirely through the matrix file format, whose layout constants
come from `hemalearn.data`.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import h5py
import numpy as np

from hemalearn.data import CELLTYPE_CODES, CellType, DiseaseLabel, MATRIX_MAGIC, MATRIX_VERSION
from hemalearn.fingerprint import file_digest


class ConversionError(ValueError):
    pass


_HEADER = struct.Struct("<4sIQQB")
_VALID_TARGETS = {ct.value for ct in CellType}
_VALID_LABELS = {label.name for label in DiseaseLabel}


def read_mapping_csv(path: str | Path, kind: str) -> dict[str, str]:
    """Two-column CSV (source, target); an optional 'source,target' header."""
    mapping: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row_number, row in enumerate(csv.reader(f), start=1):
            if not row or (row_number == 1 and [c.strip().lower() for c in row] == ["source", "target"]):
                continue
            if len(row) != 2:
                raise ConversionError(
                    f"{path}: line {row_number} of the {kind} mapping needs exactly "
                    f"two columns, got {row}"
                )
            mapping[row[0].strip()] = row[1].strip()
    if not mapping:
        raise ConversionError(f"{path}: {kind} mapping is empty")
    return mapping


def _validate_mappings(celltype_map: dict[str, str], label_map: dict[str, str]) -> dict[str, int]:
    for source, target in celltype_map.items():
        if target not in _VALID_TARGETS:
            raise ConversionError(
                f"cell-type mapping '{source}' -> '{target}': target must be one of "
                f"{sorted(_VALID_TARGETS)}"
            )
    label_codes: dict[str, int] = {}
    for source, target in label_map.items():
        name = target.upper().replace("+", "_AND_").replace(" ", "")
        if name not in _VALID_LABELS:
            raise ConversionError(
                f"label mapping '{source}' -> '{target}': target must be one of "
                f"{sorted(_VALID_LABELS)}"
            )
        label_codes[source] = int(DiseaseLabel[name])
    return label_codes


def _decode(values: np.ndarray) -> np.ndarray:
    if values.dtype.kind in ("S", "O"):
        return np.array([v.decode("utf-8") if isinstance(v, bytes) else str(v) for v in values])
    return values.astype(str)


def read_obs_column(h5: h5py.File, column: str) -> np.ndarray:
    """String values of an obs column; handles categorical and plain layouts."""
    obs = h5["obs"]
    available = sorted(k for k in obs.keys() if not k.startswith("_"))
    if column not in obs:
        raise ConversionError(
            f"obs column '{column}' not found; available columns: {available}"
        )
    node = obs[column]
    if isinstance(node, h5py.Group):  # anndata categorical: categories + codes
        categories = _decode(node["categories"][...])
        codes = np.asarray(node["codes"][...], dtype=np.int64)
        values = np.where(codes >= 0, categories[np.maximum(codes, 0)], "")
        return values
    return _decode(node[...])


class _SourceMatrix:
    """Row-chunk reader over dense or CSR-encoded /X."""

    def __init__(self, h5: h5py.File) -> None:
        x = h5["X"]
        if isinstance(x, h5py.Dataset):
            self._dense = x
            self._sparse = None
            self.shape = tuple(x.shape)
        else:
            encoding = x.attrs.get("encoding-type", "")
            if encoding != "csr_matrix":
                raise ConversionError(
                    f"unsupported X encoding {encoding!r}; expected a dense dataset "
                    "or a csr_matrix group"
                )
            self._dense = None
            self._sparse = x
            self.shape = tuple(int(v) for v in x.attrs["shape"])

    def rows(self, start: int, stop: int) -> np.ndarray:
        if self._dense is not None:
            return np.asarray(self._dense[start:stop], dtype=np.float32)
        indptr = np.asarray(self._sparse["indptr"][start : stop + 1], dtype=np.int64)
        lo, hi = int(indptr[0]), int(indptr[-1])
        data = np.asarray(self._sparse["data"][lo:hi], dtype=np.float32)
        indices = np.asarray(self._sparse["indices"][lo:hi], dtype=np.int64)
        dense = np.zeros((stop - start, self.shape[1]), dtype=np.float32)
        bounds = indptr - lo
        for r in range(stop - start):
            a, b = bounds[r], bounds[r + 1]
            dense[r, indices[a:b]] = data[a:b]
        return dense


class _MatrixFileWriter:
    """Streams the native matrix format: header and labels first, then
    payload chunks appended in row order."""

    def __init__(self, path: Path, cell_type: CellType, labels: np.ndarray, cols: int, manifest: dict):
        self.path = path
        self.rows = int(labels.size)
        self.cols = cols
        self._written = 0
        manifest_bytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
        self._handle = open(path, "wb")
        self._handle.write(
            _HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, self.rows, cols, CELLTYPE_CODES[cell_type])
        )
        self._handle.write(labels.astype("<u1").tobytes())
        self._handle.write(struct.pack("<Q", len(manifest_bytes)))
        self._handle.write(manifest_bytes)

    def append(self, chunk: np.ndarray) -> None:
        self._handle.write(np.ascontiguousarray(chunk, dtype="<f4").tobytes())
        self._written += chunk.shape[0]

    def close(self) -> None:
        self._handle.close()
        if self._written != self.rows:
            raise ConversionError(
                f"{self.path}: wrote {self._written} rows but header promises {self.rows}"
            )


@dataclass
class ConversionManifest:
    source: str
    source_digest: str
    gene_count: int
    celltype_mapping: dict[str, str]
    label_mapping: dict[str, str]
    selected_rows: dict[str, int]
    dropped_unknown_labels: int
    unselected_rows: int
    outputs: dict[str, dict] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def convert(
    input_path: str | Path,
    celltype_map_path: str | Path,
    label_map_path: str | Path,
    out_dir: str | Path,
    *,
    celltype_col: str = "cell_type",
    label_col: str = "disease",
    drop_unknown: bool = False,
    chunk_rows: int = 4096,
) -> ConversionManifest:
    """Convert one .h5ad file into per-cell-type native matrix files."""
    celltype_map = read_mapping_csv(celltype_map_path, "cell-type")
    label_map = read_mapping_csv(label_map_path, "label")
    label_codes = _validate_mappings(celltype_map, label_map)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    source_digest = file_digest(input_path)

    with h5py.File(input_path, "r") as h5:
        celltypes = read_obs_column(h5, celltype_col)
        labels_raw = read_obs_column(h5, label_col)
        source = _SourceMatrix(h5)
        n_obs, n_genes = source.shape
        if celltypes.size != n_obs or labels_raw.size != n_obs:
            raise ConversionError(
                f"obs columns have {celltypes.size}/{labels_raw.size} entries "
                f"but X has {n_obs} rows"
            )

        # pass 1: selection and label codes per row
        targets = np.array([celltype_map.get(ct, "") for ct in celltypes])
        selected = targets != ""
        dropped = 0
        codes = np.zeros(n_obs, dtype=np.int64)
        for i in np.flatnonzero(selected):
            raw = labels_raw[i]
            if raw in label_codes:
                codes[i] = label_codes[raw]
            elif drop_unknown:
                selected[i] = False
                dropped += 1
            else:
                raise ConversionError(
                    f"row {i}: label {raw!r} has no mapping "
                    "(pass --drop-unknown to skip such rows)"
                )

        manifest = ConversionManifest(
            source=str(Path(input_path).name),
            source_digest=source_digest,
            gene_count=int(n_genes),
            celltype_mapping=dict(sorted(celltype_map.items())),
            label_mapping=dict(sorted(label_map.items())),
            selected_rows={
                name: int(np.sum(selected & (targets == name)))
                for name in sorted(set(celltype_map.values()))
            },
            dropped_unknown_labels=dropped,
            unselected_rows=int(np.sum(~selected & (targets == ""))),
        )

        writers: dict[str, _MatrixFileWriter] = {}
        for name, count in manifest.selected_rows.items():
            if count == 0:
                continue
            mask = selected & (targets == name)
            writers[name] = _MatrixFileWriter(
                out / f"{name}.hlm",
                CellType(name),
                codes[mask],
                n_genes,
                {
                    "source": manifest.source,
                    "source_digest": source_digest,
                    "converter": "hemalearn-ingest",
                    "celltype_sources": sorted(
                        s for s, t in celltype_map.items() if t == name
                    ),
                    "label_mapping": manifest.label_mapping,
                },
            )

        # pass 2: stream X in row chunks, fanning rows out to their writers
        for start in range(0, n_obs, chunk_rows):
            stop = min(start + chunk_rows, n_obs)
            if not selected[start:stop].any():
                continue
            block = source.rows(start, stop)
            if not np.isfinite(block).all():
                bad = np.argwhere(~np.isfinite(block))[0]
                raise ConversionError(
                    f"non-finite expression value at source row {start + bad[0]}, "
                    f"gene {bad[1]}"
                )
            for name, writer in writers.items():
                mask = (targets[start:stop] == name) & selected[start:stop]
                if mask.any():
                    writer.append(block[mask])

    for name, writer in writers.items():
        writer.close()
        manifest.outputs[name] = {
            "path": writer.path.name,
            "rows": writer.rows,
            "digest": file_digest(writer.path),
        }
    manifest.save(out / "conversion_manifest.json")
    return manifest
