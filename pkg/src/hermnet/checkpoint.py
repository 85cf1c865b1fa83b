"""Checkpoint container: a text header followed by raw float64 arrays.

Layout::

    HNCKPT 1 <header_bytes>\\n
    <header_bytes of JSON>\\n
    <payload>

The JSON header is ``{"arrays": [{"name", "shape", "offset", "nbytes"}, ...],
"meta": {...}}``; offsets are relative to the first payload byte and every
array is stored C-contiguous, little-endian float64.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .exceptions import FormatError

MAGIC = b"HNCKPT"
VERSION = 1


def save_arrays(path, arrays, meta=None):
    entries, blobs, offset = [], [], 0
    for name, value in arrays.items():
        data = np.require(value, dtype="<f8", requirements="C")
        entries.append({"name": name, "shape": list(data.shape), "offset": offset, "nbytes": data.nbytes})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC + f" {VERSION} {len(header)}\n".encode("ascii"))
        fh.write(header + b"\n")
        for blob in blobs:
            fh.write(blob)
    os.replace(tmp, path)


def load_arrays(path):
    """Return ``(arrays, meta)``; arrays keep the on-disk order."""
    with open(path, "rb") as fh:
        raw = fh.read()
    line_end = raw.find(b"\n")
    if line_end < 0 or not raw.startswith(MAGIC + b" "):
        raise FormatError("not a hermnet checkpoint (bad magic)", offset=0)
    try:
        _, version, size = raw[:line_end].split(b" ")
        version, size = int(version), int(size)
    except ValueError:
        raise FormatError("malformed checkpoint preamble", offset=0) from None
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", offset=len(MAGIC) + 1)
    start = line_end + 1
    try:
        header = json.loads(raw[start:start + size].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError("checkpoint header is not valid JSON", offset=start) from None
    payload = start + size + 1
    arrays = {}
    for entry in header["arrays"]:
        begin = payload + entry["offset"]
        end = begin + entry["nbytes"]
        if end > len(raw):
            raise FormatError(f"array {entry['name']!r} truncated", offset=len(raw))
        arrays[entry["name"]] = np.frombuffer(raw[begin:end], dtype="<f8").reshape(tuple(entry["shape"])).astype(np.float64)
    return arrays, header.get("meta", {})


def save_model(path, model, meta=None):
    save_arrays(path, model.state_dict(), meta)


def load_model(path, model):
    arrays, meta = load_arrays(path)
    model.load_state_dict(arrays)
    return meta
