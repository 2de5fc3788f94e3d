"""Binary tensor container used for checkpoints, feature caches, and
spectrum exports.

Layout (all integers little-endian):
    magic   4 bytes  "RFDF"
    version u16      = 1
    count   u32      number of tensors
    per tensor:
        name_len u16, name bytes (UTF-8)
        rank     u8
        dims     rank x u64
        payload  float32 little-endian, row-major
    crc     u32      CRC32 of everything after the magic, up to here
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from ..errors import CorruptCheckpoint

MAGIC = b"RFDF"
VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    body = bytearray()
    body += struct.pack("<H", VERSION)
    body += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        a = np.ascontiguousarray(arr, dtype=np.float32)
        name_b = name.encode("utf-8")
        if len(name_b) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:40]}...")
        if a.ndim > 0xFF:
            raise ValueError("tensor rank exceeds 255")
        body += struct.pack("<H", len(name_b))
        body += name_b
        body += struct.pack("<B", a.ndim)
        for d in a.shape:
            body += struct.pack("<Q", d)
        body += a.astype("<f4").tobytes()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(body)
        f.write(struct.pack("<I", crc))


def load_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(MAGIC) + 2 + 4 + 4 or blob[:4] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic or truncated file")
    body = blob[4:-4]
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise CorruptCheckpoint(f"{path}: CRC mismatch")

    pos = 0
    (version,) = struct.unpack_from("<H", body, pos)
    pos += 2
    if version != VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported version {version}")
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = struct.unpack_from("<B", body, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}Q", body, pos) if rank else ()
            pos += 8 * rank
            n = int(np.prod(dims, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(body, dtype="<f4", count=n, offset=pos)
            pos += 4 * n
        except (struct.error, ValueError) as exc:
            raise CorruptCheckpoint(f"{path}: truncated tensor table") from exc
        if name in tensors:
            raise CorruptCheckpoint(f"{path}: duplicate tensor name {name!r}")
        tensors[name] = arr.reshape(dims).copy()
    if pos != len(body):
        raise CorruptCheckpoint(f"{path}: trailing bytes after tensor table")
    return tensors


# -- metadata helpers: small integers stored exactly as float32 scalars ----

def pack_meta(meta: dict[str, int]) -> dict[str, np.ndarray]:
    """Encode non-negative ints below 2^32, split 16/16 so f32 stays exact."""
    out = {}
    for key, value in meta.items():
        v = int(value)
        if not (0 <= v < 2 ** 32):
            raise ValueError(f"meta value {key} must fit in u32")
        out[f"meta.{key}.hi"] = np.array(v >> 16, dtype=np.float32)
        out[f"meta.{key}.lo"] = np.array(v & 0xFFFF, dtype=np.float32)
    return out


def unpack_meta(tensors: dict[str, np.ndarray]) -> dict[str, int]:
    meta = {}
    for name, arr in tensors.items():
        if name.startswith("meta.") and name.endswith(".hi"):
            key = name[5:-3]
            hi = int(arr)
            lo = int(tensors[f"meta.{key}.lo"])
            meta[key] = (hi << 16) | lo
    return meta
