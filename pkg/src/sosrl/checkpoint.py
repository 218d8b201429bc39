"""Named-tensor checkpoint container.

Layout: a 8-byte header (magic ``SRLT`` + little-endian uint32 version),
a uint32 manifest length, the JSON manifest, then the raw tensor payloads
back to back. The manifest lists name/shape/dtype/offset for every tensor
and carries an arbitrary ``meta`` dict (vocab, config echo, ...), so a
checkpoint is self-describing.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from sosrl.autodiff import Tensor

MAGIC = b"SRLT"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt or unsupported checkpoint file."""


def save_checkpoint(path, tensors: Mapping[str, Tensor | np.ndarray], meta: dict[str, Any] | None = None) -> None:
    entries = []
    payloads = []
    offset = 0
    for name in sorted(tensors):
        arr = tensors[name]
        data = np.ascontiguousarray(arr.data if isinstance(arr, Tensor) else arr)
        raw = data.astype(data.dtype.newbyteorder("<")).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(data.shape),
                "dtype": data.dtype.name,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        payloads.append(raw)
        offset += len(raw)
    manifest = json.dumps({"tensors": entries, "meta": meta or {}}).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(manifest)))
        fh.write(manifest)
        for raw in payloads:
            fh.write(raw)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (mlen,) = struct.unpack("<I", blob[8:12])
    try:
        manifest = json.loads(blob[12 : 12 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: unreadable manifest ({err})") from err
    base = 12 + mlen
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        start = base + entry["offset"]
        stop = start + entry["nbytes"]
        if stop > len(blob):
            raise CheckpointError(f"{path}: truncated payload for tensor {entry['name']!r}")
        arr = np.frombuffer(blob[start:stop], dtype=np.dtype(entry["dtype"]).newbyteorder("<"))
        tensors[entry["name"]] = arr.reshape(entry["shape"]).astype(entry["dtype"])
    return tensors, manifest.get("meta", {})
