"""Model checkpoints on top of the binary tensor container.

A checkpoint holds the model kind, its spec, every trainable tensor,
batchnorm running statistics, fitted preprocessing parameters (for the
autoencoder), and the fingerprints that chain it to its inputs.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .classifiers import AttentionClassifier, AttentionSpec, FFNClassifier, FFNSpec
from .container import load_container, save_container
from .data import ExpressionPreprocess
from .embedding import Autoencoder, AutoencoderSpec
from .errors import InputError
from .graph import GCNClassifier, GCNSpec

_PREPROCESS_KEYS = ("preprocess_mean", "preprocess_std")


def save_autoencoder_checkpoint(
    path: str | Path,
    model: Autoencoder,
    preprocess: ExpressionPreprocess | None,
    extra_meta: dict | None = None,
) -> None:
    meta = {
        "kind": "autoencoder",
        "spec": model.spec.to_dict(),
        "fingerprint": model.fingerprint(),
        "has_preprocess": preprocess is not None,
    }
    meta.update(extra_meta or {})
    arrays = dict(model.state_arrays())
    if preprocess is not None:
        arrays.update(preprocess.state_arrays())
    save_container(path, meta, arrays)


def load_autoencoder_checkpoint(
    path: str | Path,
) -> tuple[Autoencoder, ExpressionPreprocess | None, dict]:
    meta, arrays = load_container(path)
    if meta.get("kind") != "autoencoder":
        raise InputError(f"{path}: not an autoencoder checkpoint (kind={meta.get('kind')!r})")
    model = Autoencoder(AutoencoderSpec.from_dict(meta["spec"]))
    model.load_state_arrays(arrays)
    model.eval_mode()
    preprocess = None
    if meta.get("has_preprocess"):
        preprocess = ExpressionPreprocess.from_state_arrays(
            {k: arrays[k] for k in _PREPROCESS_KEYS}
        )
    return model, preprocess, meta


_CLASSIFIER_SPECS = {"ffn": FFNSpec, "attention": AttentionSpec, "gcn": GCNSpec}
_CLASSIFIER_MODELS = {"ffn": FFNClassifier, "attention": AttentionClassifier, "gcn": GCNClassifier}


def save_classifier_checkpoint(path: str | Path, model, extra_meta: dict | None = None) -> None:
    spec_dict = model.spec.to_dict()
    meta = {
        "kind": spec_dict["kind"],
        "spec": spec_dict,
        "fingerprint": model.fingerprint(),
    }
    meta.update(extra_meta or {})
    save_container(path, meta, model.state_arrays())


def load_classifier_checkpoint(path: str | Path):
    meta, arrays = load_container(path)
    kind = meta.get("kind")
    if kind not in _CLASSIFIER_SPECS:
        raise InputError(f"{path}: not a classifier checkpoint (kind={kind!r})")
    spec = _CLASSIFIER_SPECS[kind].from_dict(meta["spec"])
    model = _CLASSIFIER_MODELS[kind](spec)
    model.load_state_arrays({k: np.asarray(v) for k, v in arrays.items()})
    model.eval_mode()
    return model, meta
