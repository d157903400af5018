"""Binary checkpoint format.

Layout: magic ``DUALF1``, little-endian u32 length of a JSON manifest,
the manifest itself (parameter name, shape, byte offset into the data
section, plus free-form metadata), then the raw little-endian float64
parameter data.
"""
from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"DUALF1"


def save_checkpoint(path, params, meta=None):
    """params: mapping name -> float array; meta: JSON-serializable dict."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    manifest = json.dumps(
        {"params": entries, "meta": meta or {}}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(manifest)))
        fh.write(manifest)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (params dict, meta dict)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: bad checkpoint magic {magic!r}")
        (mlen,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        data = fh.read()
    params = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=start)
        params[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return params, manifest.get("meta", {})
