"""Checkpoint container: a flat sequence of named float32 tensors
(name length, name bytes, dim count, dims, little-endian payload) plus
a JSON sidecar carrying the architecture config and iteration counter."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


def pack_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = []
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f4")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}I", *a.shape))
        chunks.append(a.tobytes())
    return b"".join(chunks)


def unpack_tensors(data: bytes) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    off = 0
    total = len(data)
    while off < total:
        if off + 4 > total:
            raise ValueError("truncated tensor record header")
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        count = int(np.prod(dims)) if ndim else 1
        end = off + 4 * count
        if end > total:
            raise ValueError(f"truncated payload for tensor {name!r}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(dims).copy()
        off = end
    return tensors


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> None:
    path = Path(path)
    path.write_bytes(pack_tensors(tensors))
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    tensors = unpack_tensors(path.read_bytes())
    meta = json.loads(Path(str(path) + ".json").read_text())
    return tensors, meta
