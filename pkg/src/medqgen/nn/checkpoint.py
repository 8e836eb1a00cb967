"""Model checkpoint container: named float64 arrays, bit-exact round trip.

Layout: one magic line, one JSON manifest line (format version, caller
metadata, parameter names/shapes in order), then the raw little-endian
float64 blobs concatenated in manifest order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"MQGCKPT\n"
FORMAT_VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    manifest = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "params": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8") + b"\n")
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (arrays, meta)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DataError(f"not a checkpoint file: {path}")
        manifest = json.loads(fh.readline().decode("utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported checkpoint version in {path}")
        arrays = {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise DataError(f"truncated checkpoint: {path}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return arrays, manifest["meta"]
