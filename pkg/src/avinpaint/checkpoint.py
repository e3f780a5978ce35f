"""Binary tensor container.

Layout (little-endian)::

    b"AVSI" | u32 version | repeated: u32 name_len, name (utf-8),
                                      u32 rank, u32 dims[rank], f32 data

Tensors are read until end of file.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"AVSI"
VERSION = 1


def save_tensors(path, tensors: dict) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, value in tensors.items():
        arr = np.asarray(value, dtype="<f4")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(b"".join(chunks))


def load_tensors(path) -> dict:
    """Returns ``{name: float64 array}`` in file order."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ValueError(f"{path}: not an AVSI checkpoint")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    out = {}
    try:
        while pos < len(buf):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            count = int(np.prod(shape, dtype=np.int64))
            if pos + 4 * count > len(buf):
                raise ValueError("truncated tensor data")
            data = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
            pos += 4 * count
            out[name] = data.reshape(shape).astype(np.float64)
    except struct.error as exc:
        raise ValueError(f"{path}: truncated checkpoint") from exc
    return out
