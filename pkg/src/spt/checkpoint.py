"""Binary checkpoint: ``SPT1`` magic, length-prefixed JSON header, float32 payload.

Layout::

    b"SPT1" | uint64 LE header length | UTF-8 JSON header | tensor bytes

The header holds the model config, vocabulary, schema pool, finished phases
and a manifest of ``{"name", "shape", "offset"}`` (byte offsets into the
payload). Tensors are little-endian float32 in manifest order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, ModelParams, base_tensor_names
from .registry import SchemaPool
from .textcore import Vocabulary

MAGIC = b"SPT1"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


def to_bytes(params: ModelParams, vocab: Vocabulary, pool: SchemaPool, extra: dict | None = None) -> bytes:
    tensors = [(name, params.base[name]) for name in base_tensor_names(params.config)]
    tensors.append(("ext", params.ext))
    manifest, chunks, offset = [], [], 0
    for name, arr in tensors:
        raw = np.ascontiguousarray(arr, dtype=_F32).tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    cfg = params.config.to_json()
    cfg["dtype"] = "float32"
    header = {
        "format_version": FORMAT_VERSION,
        "config": cfg,
        "vocabulary": vocab.to_json(),
        "pool": pool.to_json(),
        "phases_done": list(params.phases_done),
        "tensors": manifest,
        "extra": extra or {},
    }
    hb = json.dumps(header, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(hb)) + hb + b"".join(chunks)


def save(path, params: ModelParams, vocab: Vocabulary, pool: SchemaPool, extra: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(params, vocab, pool, extra))


def from_bytes(data: bytes):
    """Return ``(params, vocab, pool, header)``."""
    if data[:4] != MAGIC:
        raise CheckpointError("bad magic; not an SPT checkpoint")
    if len(data) < 12:
        raise CheckpointError("truncated header")
    (n,) = struct.unpack("<Q", data[4:12])
    try:
        header = json.loads(data[12:12 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format_version {header.get('format_version')!r}")
    payload = memoryview(data)[12 + n:]
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 4
        if end > len(payload):
            raise CheckpointError(f"tensor {entry['name']!r} runs past end of file")
        arrays[entry["name"]] = np.frombuffer(payload[start:end], dtype=_F32).reshape(shape).astype(np.float32)
    config = ModelConfig.from_json(header["config"])
    missing = [k for k in base_tensor_names(config) + ["ext"] if k not in arrays]
    if missing:
        raise CheckpointError(f"missing tensors: {missing}")
    ext = arrays.pop("ext")
    params = ModelParams(config, arrays, ext, phases_done=list(header["phases_done"]))
    return params, Vocabulary.from_json(header["vocabulary"]), SchemaPool.from_json(header["pool"]), header


def load(path):
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    return from_bytes(p.read_bytes())
