"""Checkpoint files.

Layout: ``b"LODC" | version u32 LE | header_length u32 LE | UTF-8 JSON header
| float32 LE arrays concatenated in header order``. The header carries the
architecture, caller metadata and ``(name, shape, tag)`` for every array.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .network import ArchSpec, ParamTree

MAGIC = b"LODC"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


def encode_checkpoint(arch: ArchSpec, params: ParamTree, metadata: dict | None = None) -> bytes:
    entries = [{"name": k, "shape": list(a.shape), "tag": params.tags[k]} for k, a in params.items()]
    header = {"arch": arch.to_json(), "metadata": metadata or {}, "params": entries}
    hbytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in params.arrays.values())
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + body


def decode_checkpoint(data: bytes, path="<bytes>"):
    if len(data) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated ({len(data)} bytes, prefix needs {_PREFIX.size})")
    magic, version, hlen = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    start = _PREFIX.size
    if start + hlen > len(data):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    pos = start + hlen
    arrays, tags = {}, {}
    for e in header["params"]:
        n = int(np.prod(e["shape"], dtype=np.int64))
        if pos + 4 * n > len(data):
            raise CheckpointError(f"{path}: truncated in array {e['name']!r}")
        arrays[e["name"]] = np.frombuffer(data, "<f4", n, pos).reshape(e["shape"]).astype(np.float32)
        tags[e["name"]] = e["tag"]
        pos += 4 * n
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return ArchSpec.from_json(header["arch"]), ParamTree(arrays, tags), header["metadata"]


def save_checkpoint(path, arch: ArchSpec, params: ParamTree, metadata: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_checkpoint(arch, params, metadata))
    tmp.replace(path)


def load_checkpoint(path):
    """Return ``(arch, params, metadata)``; params come back as float32."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read: {exc.strerror or exc}") from exc
    return decode_checkpoint(data, path)
