"""Tensor checkpoint files: a JSON header plus flat float64 payload.

Layout:

    bytes 0..7    little-endian uint64, byte length of the JSON header
    header        UTF-8 JSON: {"tensors": [{"name", "shape", "offset"}...]}
    payload       the tensors' float64 data, little endian, concatenated

``offset`` is the byte position of a tensor within the payload section.
"""

from __future__ import annotations

import json
import struct

import numpy as np

__all__ = ["save_tensors", "load_tensors"]

_LEN_FMT = "<Q"


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named arrays to ``path``; values are stored as float64.

    ``meta`` is an optional JSON-serializable dict stored alongside the
    tensor listing in the header (model hyperparameters and the like).
    """
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header_obj = {"tensors": entries}
    if meta is not None:
        header_obj["meta"] = meta
    header = json.dumps(header_obj).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack(_LEN_FMT, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_tensors(path, with_meta: bool = False):
    """Read a checkpoint written by save_tensors.

    Returns the tensor dict, or (tensors, meta) when ``with_meta`` is set.
    """
    with open(path, "rb") as fh:
        raw_len = fh.read(struct.calcsize(_LEN_FMT))
        (header_len,) = struct.unpack(_LEN_FMT, raw_len)
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()
    out = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        out[entry["name"]] = arr.reshape(shape).astype(np.float64)
    if with_meta:
        return out, header.get("meta", {})
    return out
