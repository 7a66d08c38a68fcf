"""
Parameter checkpoint files.

Layout (all integers and floats little-endian):

    magic      8 bytes   b"KBQACKPT"
    version    uint16    FORMAT_VERSION
    header     uint32 length + UTF-8 JSON object (keys sorted)
    count      uint32    number of parameters
    then per parameter, in the order given to save_checkpoint:
        name   uint16 length + UTF-8 bytes
        ndim   uint8
        dims   ndim x uint32
        values prod(dims) x float64, row-major

The same parameters saved with the same header always produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from typing import Sequence

import numpy as np

from errors import ParseError
from tensor import Tensor

__docformat__ = 'reStructuredText'

MAGIC = b"KBQACKPT"
FORMAT_VERSION = 1


def to_bytes(params: Sequence[Tensor], header: dict | None = None) -> bytes:
    """ Serialise named tensors and a JSON header. Parameter names must be unique. """
    names = [p.name for p in params]
    if any(n is None for n in names) or len(set(names)) != len(names):
        raise ValueError("checkpoint parameters need unique names")
    head = json.dumps(header or {}, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<HI", FORMAT_VERSION, len(head)), head, struct.pack("<I", len(params))]
    for p in params:
        name = p.name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name)))
        chunks.append(name)
        chunks.append(struct.pack("<B", p.values.ndim))
        chunks.append(struct.pack(f"<{p.values.ndim}I", *p.shape))
        chunks.append(np.ascontiguousarray(p.values, dtype="<f8").tobytes())
    return b"".join(chunks)


def from_bytes(data: bytes, path: str = "<bytes>") -> tuple[dict, dict[str, np.ndarray]]:
    """ Inverse of to_bytes: (header, name -> array), names in file order.
    :raises ParseError: bad magic, unsupported version, truncation, an undecodable
        header or name, or trailing bytes
    """
    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise ParseError(path, 0, f"truncated checkpoint at byte {offset}")
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise ParseError(path, 0, "not a checkpoint file")
    try:
        version, head_len = struct.unpack("<HI", take(6))
        if version != FORMAT_VERSION:
            raise ParseError(path, 0, f"unsupported checkpoint version {version}")
        header = json.loads(take(head_len).decode("utf-8"))
        if not isinstance(header, dict):
            raise ParseError(path, 0, "checkpoint header is not a JSON object")
        (count,) = struct.unpack("<I", take(4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", take(2))
            name = take(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", take(1))
            dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
            size = int(np.prod(dims))
            arrays[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(dims)
    except (ValueError, struct.error) as exc:
        # JSONDecodeError and UnicodeDecodeError are ValueErrors
        raise ParseError(path, 0, f"damaged checkpoint: {exc}") from exc
    if offset != len(data):
        raise ParseError(path, 0, f"{len(data) - offset} trailing bytes after checkpoint")
    return header, arrays


def save_checkpoint(path: str, params: Sequence[Tensor], header: dict | None = None) -> None:
    with open(path, "wb") as f:
        f.write(to_bytes(params, header))


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        return from_bytes(f.read(), path)


def restore(params: Sequence[Tensor], arrays: dict[str, np.ndarray], path: str = "<checkpoint>") -> None:
    """ Copy stored values into existing tensors, checking names and shapes. """
    for p in params:
        if p.name not in arrays:
            raise ParseError(path, 0, f"checkpoint has no parameter {p.name}")
        stored = arrays[p.name]
        if stored.shape != p.shape:
            raise ParseError(path, 0, f"{p.name}: shape {stored.shape} in file, {p.shape} expected")
        p.values = stored.copy()
        p.grad = None
