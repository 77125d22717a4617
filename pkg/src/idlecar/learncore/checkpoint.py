"""Checkpoint container: a JSON spec block followed by named float32 tensors.

Layout (little-endian)::

    b"IRCK" | u32 version | u32 spec_len | spec (utf-8 JSON) | u32 n_tensors
    then per tensor: u16 name_len | name | u8 ndim | u32 dims... | float32 data

Tensors are written in sorted name order so identical inputs give
identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, TruncationError

MAGIC = b"IRCK"
VERSION = 1


def encode_checkpoint(spec, tensors):
    spec_blob = json.dumps(spec, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(spec_blob)), spec_blob, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(buf):
    if buf[:4] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    try:
        version, spec_len = struct.unpack_from("<II", buf, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        off = 12
        spec = json.loads(buf[off : off + spec_len].decode())
        off += spec_len
        (count,) = struct.unpack_from("<I", buf, off)
        off += 4
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off : off + nlen].decode()
            off += nlen
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            size = int(np.prod(shape)) * 4
            if off + size > len(buf):
                raise TruncationError(f"tensor {name!r} runs past the end of the checkpoint")
            tensors[name] = np.frombuffer(buf, dtype="<f4", count=size // 4, offset=off).reshape(shape).copy()
            off += size
    except struct.error as exc:
        raise TruncationError(f"checkpoint truncated: {exc}") from exc
    if off != len(buf):
        raise TruncationError(f"{len(buf) - off} trailing bytes after the last tensor")
    return spec, tensors


def save_checkpoint(path, spec, tensors):
    Path(path).write_bytes(encode_checkpoint(spec, tensors))


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
