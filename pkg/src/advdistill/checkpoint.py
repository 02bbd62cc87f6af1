"""Single-file checkpoint container: JSON header + raw little-endian arrays.

Layout: 8-byte magic ``ADVDCKPT``, little-endian uint64 header length, the
UTF-8 JSON header, then the concatenated raw arrays. The header records each
parameter's name, group, shape, dtype and byte offset into the data section,
plus the config hash of the run that produced it. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .optim import ParamSet
from .tensor import Tensor

__all__ = ["save_checkpoint", "load_checkpoint", "read_header", "CheckpointError"]

_MAGIC = b"ADVDCKPT"


class CheckpointError(RuntimeError):
    """The file is not a valid checkpoint."""


def save_checkpoint(params: ParamSet, path, config_hash: str = "") -> None:
    path = Path(path)
    entries = []
    offset = 0
    blobs = []
    for name, tensor in params.items():
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        blob = arr.tobytes()
        entries.append({
            "name": name,
            "group": params.group_of(name),
            "shape": list(tensor.data.shape),
            "dtype": "<f4",
            "offset": offset,
            "nbytes": len(blob),
        })
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"config_hash": config_hash, "params": entries}).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    tmp.replace(path)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        return json.loads(fh.read(hlen).decode())


def load_checkpoint(path) -> tuple[ParamSet, str]:
    """Load a checkpoint; returns (params, config_hash)."""
    path = Path(path)
    header = read_header(path)
    data_start = 8 + 8 + len(json.dumps(header).encode())
    # Header length must be recomputed from the file, not a re-serialization.
    with open(path, "rb") as fh:
        fh.seek(8)
        (hlen,) = struct.unpack("<Q", fh.read(8))
        data_start = 8 + 8 + hlen
        params = ParamSet()
        for entry in header["params"]:
            fh.seek(data_start + entry["offset"])
            blob = fh.read(entry["nbytes"])
            arr = np.frombuffer(blob, dtype=entry["dtype"]).reshape(entry["shape"])
            tensor = Tensor(arr.astype(np.float32, copy=True), requires_grad=True)
            params.add(entry["name"], tensor, entry["group"])
    return params, header.get("config_hash", "")
