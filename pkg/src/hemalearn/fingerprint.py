"""Content fingerprints used to chain pipeline artifacts together.

Every stage records the digests of what produced it, so a stale or
mismatched artifact is caught at load time instead of corrupting a run.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def array_fingerprint(arrays: dict[str, np.ndarray]) -> str:
    """Digest of named arrays; order-independent via sorted names."""
    h = hashlib.sha256()
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        h.update(name.encode("utf-8"))
        h.update(str(a.dtype).encode("ascii"))
        h.update(repr(a.shape).encode("ascii"))
        h.update(a.tobytes())
    return h.hexdigest()


def json_fingerprint(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
