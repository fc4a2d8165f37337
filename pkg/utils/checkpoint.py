"""
"DOGC" checkpoint container

Layout (all integers little-endian):
    4 bytes   magic b"DOGC"
    uint32    format version
    uint32    metadata length, then that many bytes of UTF-8 JSON (sorted keys)
    uint32    section count
    per section, in the order listed by metadata["sections"]:
        uint32 name length, name bytes
        uint32 ndim, then ndim x uint32 dims
        uint64 payload length in bytes, then float32 little-endian payload
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

import config


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


def write_checkpoint(path: str | Path, component: str, metadata: dict, weights: dict[str, np.ndarray]) -> None:
    """
    Write a checkpoint; identical inputs give identical bytes.

    Args:
        path: Destination file
        component: Component tag stored in the metadata ("planner", "executor")
        metadata: JSON-serializable description of the weights' owner
        weights: Ordered name -> tensor mapping
    """
    meta = dict(metadata, component=component, sections=list(weights))
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks = [
        config.CHECKPOINT_MAGIC,
        struct.pack("<I", config.CHECKPOINT_VERSION),
        struct.pack("<I", len(meta_bytes)),
        meta_bytes,
        struct.pack("<I", len(weights)),
    ]
    for name, tensor in weights.items():
        arr = np.asarray(tensor, dtype="<f4")
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(name_bytes)) + name_bytes)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        payload = arr.tobytes()
        chunks.append(struct.pack("<Q", len(payload)) + payload)
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CheckpointError(f"checkpoint {self.path} is truncated at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path: str | Path, component: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """
    Read a checkpoint.

    Args:
        path: Checkpoint file
        component: When given, the stored component tag must match

    Returns:
        Tuple of (metadata, ordered weights)
    """
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != config.CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a DOGC checkpoint")
    (version,) = reader.unpack("<I")
    if version != config.CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (meta_len,) = reader.unpack("<I")
    metadata = json.loads(reader.take(meta_len).decode("utf-8"))
    if component is not None and metadata.get("component") != component:
        raise CheckpointError(f"{path} holds a {metadata.get('component')!r} checkpoint, expected {component!r}")

    (count,) = reader.unpack("<I")
    weights: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<I")
        shape = reader.unpack(f"<{ndim}I") if ndim else ()
        (nbytes,) = reader.unpack("<Q")
        arr = np.frombuffer(reader.take(nbytes), dtype="<f4")
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"{path}: section {name} payload does not match shape {shape}")
        weights[name] = arr.reshape(shape).astype(np.float32)
    if list(weights) != metadata.get("sections"):
        raise CheckpointError(f"{path}: section order does not match metadata")
    return metadata, weights
