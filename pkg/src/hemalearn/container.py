"""Versioned binary container: a JSON header plus named float arrays.

Layout (all little-endian):

    magic "HLTC" | version u32 | header_len u64 | header JSON
    | concatenated raw array payloads

The header carries arbitrary metadata under "meta" and an ordered array
index under "arrays" (name, dtype, shape). Writing is byte-deterministic
for identical inputs, which the pipeline relies on for rerun checks.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import InputError

CONTAINER_MAGIC = b"HLTC"
CONTAINER_VERSION = 1
_PREFIX = struct.Struct("<4sIQ")

_ALLOWED_DTYPES = {"<f4", "<f8", "<i8", "|u1"}


def save_container(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    index = []
    payloads = []
    for name, array in arrays.items():
        a = np.ascontiguousarray(array)
        dtype = a.dtype.newbyteorder("<").str
        if dtype not in _ALLOWED_DTYPES:
            raise InputError(f"array '{name}' has unsupported dtype {a.dtype}")
        index.append({"name": name, "dtype": dtype, "shape": list(a.shape)})
        payloads.append(a.astype(dtype, copy=False).tobytes())
    header = json.dumps({"meta": meta, "arrays": index}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(CONTAINER_MAGIC, CONTAINER_VERSION, len(header)))
        f.write(header)
        for blob in payloads:
            f.write(blob)


def load_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    blob = Path(path).read_bytes()
    if len(blob) < _PREFIX.size:
        raise InputError(f"{path}: too short to be a container ({len(blob)} bytes)")
    magic, version, header_len = _PREFIX.unpack_from(blob, 0)
    if magic != CONTAINER_MAGIC:
        raise InputError(f"{path}: bad magic {magic!r}, expected {CONTAINER_MAGIC!r}")
    if version != CONTAINER_VERSION:
        raise InputError(f"{path}: unsupported container version {version}")
    offset = _PREFIX.size
    if len(blob) < offset + header_len:
        raise InputError(f"{path}: truncated header")
    header = json.loads(blob[offset : offset + header_len].decode("utf-8"))
    offset += header_len

    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * dtype.itemsize
        if len(blob) < offset + nbytes:
            raise InputError(
                f"{path}: truncated payload for '{entry['name']}', "
                f"need {offset + nbytes} bytes, have {len(blob)}"
            )
        arrays[entry["name"]] = (
            np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape).copy()
        )
        offset += nbytes
    if offset != len(blob):
        raise InputError(f"{path}: {len(blob) - offset} trailing bytes after payload")
    return header["meta"], arrays
