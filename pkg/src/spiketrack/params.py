"""Weight container: ``manifest.json`` (name -> shape, dtype, byte offset)
plus a flat little-endian float32 payload ``weights.bin``.

Entries are stored in sorted name order so the payload is deterministic.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"
PAYLOAD = "weights.bin"
DTYPE = "<f4"


def save_weights(params: dict, directory, meta: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries, offset = {}, 0
    with open(d / PAYLOAD, "wb") as fh:
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype=DTYPE)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite values")
            fh.write(arr.tobytes())
            entries[name] = {"shape": list(arr.shape), "dtype": "float32-le", "offset": offset}
            offset += arr.nbytes
    doc = {"format": "spiketrack-weights/1", "payload": PAYLOAD, "size": offset, "tensors": entries}
    if meta:
        doc["meta"] = meta
    (d / MANIFEST).write_text(json.dumps(doc, indent=1, sort_keys=True))
    return d


def load_weights(directory) -> tuple[dict, dict]:
    """``(params, meta)``; parameters come back as float64 arrays."""
    d = Path(directory)
    if not (d / MANIFEST).is_file():
        raise FileNotFoundError(f"no weight manifest in {d}")
    doc = json.loads((d / MANIFEST).read_text())
    blob = (d / doc.get("payload", PAYLOAD)).read_bytes()
    if len(blob) != doc["size"]:
        raise ValueError(f"payload has {len(blob)} bytes, manifest expects {doc['size']}")
    params = {}
    for name, e in doc["tensors"].items():
        n = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype=DTYPE, count=n, offset=e["offset"])
        params[name] = arr.reshape(e["shape"]).astype(np.float64)
    return params, doc.get("meta", {})
