"""Toy .h5ad fixtures built directly with h5py."""

from __future__ import annotations

import h5py
import numpy as np
import pytest

# 20 cells across three source cell types and all seven disease labels
SOURCE_CELLTYPES = [
    "HSC/MPP", "HSC/MPP", "HSC/MPP", "HSC/MPP", "HSC/MPP", "HSC/MPP",
    "HSC/MPP", "HSC/MPP", "HSC/MPP", "HSC/MPP",
    "CD14+ monocyte", "CD14+ monocyte", "CD14+ monocyte", "CD14+ monocyte",
    "CD14+ monocyte", "CD14+ monocyte",
    "T lymphocyte", "T lymphocyte", "T lymphocyte", "T lymphocyte",
]
SOURCE_LABELS = [
    "normal", "MDS", "cytopenia", "CMML", "SMM-MDS", "MPN-MDS", "CMML-MDS",
    "normal", "MDS", "normal",
    "normal", "MDS", "cytopenia", "CMML", "normal", "SMM-MDS",
    "normal", "MDS", "MPN-MDS", "CMML-MDS",
]
GENES = 15

CELLTYPE_MAP_CSV = (
    "source,target\n"
    "HSC/MPP,progenitor\n"
    "CD14+ monocyte,monocyte\n"
    "T lymphocyte,lymphocyte\n"
)
LABEL_MAP_CSV = (
    "source,target\n"
    "normal,NORMAL\n"
    "MDS,MDS\n"
    "cytopenia,CYTOPENIA\n"
    "CMML,CMML\n"
    "SMM-MDS,SMM_AND_MDS\n"
    "MPN-MDS,MPN_AND_MDS\n"
    "CMML-MDS,CMML_AND_MDS\n"
)


def fixture_matrix() -> np.ndarray:
    rng = np.random.default_rng(99)
    x = rng.exponential(1.0, size=(len(SOURCE_CELLTYPES), GENES)).astype(np.float32)
    x[x < 0.4] = 0.0  # sparse-ish, like expression counts
    return x


def _write_categorical(group: h5py.Group, name: str, values: list[str]) -> None:
    categories = sorted(set(values))
    codes = np.array([categories.index(v) for v in values], dtype=np.int8)
    sub = group.create_group(name)
    sub.attrs["encoding-type"] = "categorical"
    sub.create_dataset("categories", data=np.array(categories, dtype=h5py.string_dtype()))
    sub.create_dataset("codes", data=codes)


def write_h5ad(
    path,
    x: np.ndarray,
    celltypes: list[str],
    labels: list[str],
    *,
    sparse: bool = False,
    categorical_obs: bool = True,
) -> None:
    with h5py.File(path, "w") as f:
        if sparse:
            from scipy import sparse as sp

            csr = sp.csr_matrix(x)
            g = f.create_group("X")
            g.attrs["encoding-type"] = "csr_matrix"
            g.attrs["shape"] = np.array(x.shape, dtype=np.int64)
            g.create_dataset("data", data=csr.data.astype(np.float32))
            g.create_dataset("indices", data=csr.indices.astype(np.int32))
            g.create_dataset("indptr", data=csr.indptr.astype(np.int64))
        else:
            f.create_dataset("X", data=x.astype(np.float32))
        obs = f.create_group("obs")
        obs.attrs["_index"] = "cell_id"
        obs.create_dataset(
            "cell_id",
            data=np.array([f"cell{i}" for i in range(len(celltypes))], dtype=h5py.string_dtype()),
        )
        if categorical_obs:
            _write_categorical(obs, "cell_type", celltypes)
        else:
            obs.create_dataset(
                "cell_type", data=np.array(celltypes, dtype=h5py.string_dtype())
            )
        obs.create_dataset("disease", data=np.array(labels, dtype=h5py.string_dtype()))
        var = f.create_group("var")
        var.attrs["_index"] = "gene_id"
        var.create_dataset(
            "gene_id",
            data=np.array([f"gene{i}" for i in range(x.shape[1])], dtype=h5py.string_dtype()),
        )


@pytest.fixture
def fixture_dir(tmp_path):
    x = fixture_matrix()
    dense = tmp_path / "cells_dense.h5ad"
    sparse = tmp_path / "cells_sparse.h5ad"
    write_h5ad(dense, x, SOURCE_CELLTYPES, SOURCE_LABELS)
    write_h5ad(sparse, x, SOURCE_CELLTYPES, SOURCE_LABELS, sparse=True)
    (tmp_path / "celltypes.csv").write_text(CELLTYPE_MAP_CSV, encoding="utf-8")
    (tmp_path / "labels.csv").write_text(LABEL_MAP_CSV, encoding="utf-8")
    return tmp_path
