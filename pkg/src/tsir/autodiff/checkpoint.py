"""Parameter checkpoints: 8-byte header length, JSON header, then raw float64 LE data.

The header holds ``{"params": [{"name", "shape", "offset", "nbytes"}, ...], "meta": {...}}``
with offsets relative to the start of the data block.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .tensor import Tensor

_LE_F64 = np.dtype("<f8")


def save_checkpoint(params: Mapping[str, Tensor], path: str | Path, meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data, dtype=_LE_F64)
        blob = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"params": entries, "meta": meta or {}}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8 : 8 + hlen])
    data = raw[8 + hlen :]
    out = {}
    for e in header["params"]:
        chunk = data[e["offset"] : e["offset"] + e["nbytes"]]
        out[e["name"]] = np.frombuffer(chunk, dtype=_LE_F64).astype(np.float64).reshape(e["shape"])
    return out, header.get("meta", {})
