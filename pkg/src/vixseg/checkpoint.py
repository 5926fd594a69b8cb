"""Binary checkpoint format.

Layout (little-endian):

    magic   4 bytes  b"UVXW"
    version u16      currently 1
    count   u32      number of records
    record:
        id-length u16, id bytes (utf-8)
        rank      u8
        extents   rank x u64
        payload   product(extents) float32 values, row-major

Model parameters are written first in model order; optimizer moments and
"meta.*" records are appended in the same layout so a mid-training checkpoint
can resume exactly.
"""

from __future__ import annotations

import struct
from collections import OrderedDict

import numpy as np

from .errors import DataFormatError

MAGIC = b"UVXW"
VERSION = 1


def save_checkpoint(path, arrays: "OrderedDict[str, np.ndarray] | dict") -> None:
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(arrays))]
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype=np.float32)
        if not a.flags["C_CONTIGUOUS"]:
            a = np.ascontiguousarray(a)
        ident = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(ident)))
        chunks.append(ident)
        chunks.append(struct.pack("<B", a.ndim))
        chunks.append(struct.pack(f"<{a.ndim}Q", *a.shape) if a.ndim else b"")
        chunks.append(a.tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def _need(buf: bytes, offset: int, n: int, what: str) -> int:
    if offset + n > len(buf):
        raise DataFormatError(
            f"truncated checkpoint: needed {n} bytes for {what} at offset "
            f"{offset}, file has {len(buf)} bytes"
        )
    return offset + n


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        buf = fh.read()
    off = _need(buf, 0, 4, "magic")
    if buf[:4] != MAGIC:
        raise DataFormatError(f"bad checkpoint magic {buf[:4]!r} at byte 0")
    off2 = _need(buf, off, 6, "header")
    version, count = struct.unpack_from("<HI", buf, off)
    off = off2
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        off2 = _need(buf, off, 2, "id length")
        (id_len,) = struct.unpack_from("<H", buf, off)
        off = off2
        off2 = _need(buf, off, id_len, "id")
        name = buf[off:off2].decode("utf-8")
        off = off2
        off2 = _need(buf, off, 1, "rank")
        rank = buf[off]
        off = off2
        off2 = _need(buf, off, 8 * rank, "extents")
        shape = struct.unpack_from(f"<{rank}Q", buf, off) if rank else ()
        off = off2
        n = int(np.prod(shape)) if rank else 1
        off2 = _need(buf, off, 4 * n, f"payload of '{name}'")
        out[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=off).reshape(shape).copy()
        off = off2
    return out
