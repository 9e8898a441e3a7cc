"""Versioned binary checkpoint container.

Layout: magic, format version, a sorted-key JSON index describing a nested
tree (tensors replaced by indices into a raw payload), the payload itself,
and a trailing SHA-256 over everything before it. Serialization is fully
deterministic: saving the same state twice yields byte-identical files,
and any flipped bit is caught by the digest check on load.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
import torch

MAGIC = b"FINPCKPT"
FORMAT_VERSION = 1

_TENSOR_KEY = "__tensor__"


class CheckpointError(RuntimeError):
    pass


class CheckpointIntegrityError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def _encode(node: Any, arrays: list[np.ndarray]) -> Any:
    if isinstance(node, torch.Tensor):
        arrays.append(node.detach().cpu().contiguous().numpy())
        return {_TENSOR_KEY: len(arrays) - 1}
    if isinstance(node, np.ndarray):
        arrays.append(np.ascontiguousarray(node))
        return {_TENSOR_KEY: len(arrays) - 1}
    if isinstance(node, dict):
        if _TENSOR_KEY in node:
            raise CheckpointError(f"reserved key {_TENSOR_KEY!r} in state tree")
        # sorted traversal keeps payload indices canonical, so a load -> save
        # cycle reproduces the file byte for byte
        return {str(k): _encode(node[k], arrays) for k in sorted(node, key=str)}
    if isinstance(node, (list, tuple)):
        return [_encode(v, arrays) for v in node]
    if node is None or isinstance(node, (bool, int, float, str)):
        return node
    raise CheckpointError(f"unsupported value of type {type(node).__name__} in state tree")


def _decode(node: Any, arrays: list[np.ndarray]) -> Any:
    if isinstance(node, dict):
        if _TENSOR_KEY in node:
            return torch.from_numpy(arrays[node[_TENSOR_KEY]].copy())
        return {k: _decode(v, arrays) for k, v in node.items()}
    if isinstance(node, list):
        return [_decode(v, arrays) for v in node]
    return node


def save_container(path: str | Path, tree: dict) -> None:
    """Serialize a nested dict of tensors/arrays/JSON scalars."""
    arrays: list[np.ndarray] = []
    structure = _encode(tree, arrays)
    specs = []
    offset = 0
    for arr in arrays:
        nbytes = arr.nbytes
        specs.append({"dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset})
        offset += nbytes
    index = json.dumps(
        {"version": FORMAT_VERSION, "structure": structure, "tensors": specs},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")

    digest = hashlib.sha256()
    with open(path, "wb") as fh:
        for chunk in (MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(index)), index):
            fh.write(chunk)
            digest.update(chunk)
        for arr in arrays:
            data = arr.tobytes()
            fh.write(data)
            digest.update(data)
        fh.write(digest.digest())


def load_container(path: str | Path) -> dict:
    """Inverse of :func:`save_container`; raises on corruption or on a format
    version this build does not speak."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 + 8 + 32:
        raise CheckpointIntegrityError(f"{path}: file too short to be a checkpoint")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointIntegrityError(f"{path}: bad magic, not a checkpoint container")
    body, stored_digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != stored_digest:
        raise CheckpointIntegrityError(f"{path}: SHA-256 mismatch, file is corrupted")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"{path}: format version {version}, this build reads version {FORMAT_VERSION}"
        )
    (index_len,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    index = json.loads(raw[pos : pos + index_len].decode("utf-8"))
    pos += index_len
    arrays = []
    for spec in index["tensors"]:
        dtype = np.dtype(spec["dtype"])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        start = pos + spec["offset"]
        arr = np.frombuffer(body, dtype=dtype, count=count, offset=start).reshape(spec["shape"])
        arrays.append(arr)
    return _decode(index["structure"], arrays)
