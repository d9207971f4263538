"""Binary container shared by dataset dumps, arm datasets and checkpoints.

Layout (all little-endian)::

    magic      8 bytes   b"MMCOMPR\\0"
    version    uint16
    kind       uint16    1 = synthetic dump, 2 = arm dataset, 3 = checkpoint
    n_header   uint32
    header     n_header x (uint16 name length, utf-8 name, float64 value)
               64-bit integers such as seeds are stored as two entries
               "<name>.hi" and "<name>.lo" holding 32-bit halves
    n_blocks   uint32
    blocks     n_blocks x (uint16 name length, utf-8 name, uint8 ndim,
                           ndim x uint32 extent, float32 data row-major)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"MMCOMPR\0"
VERSION = 1
KIND_SYNTHETIC, KIND_ARM, KIND_CHECKPOINT = 1, 2, 3


class ContainerError(ValueError):
    pass


def put_u64(header: dict[str, float], key: str, value: int) -> None:
    """Store an integer too wide for a float64 mantissa as two exact halves."""
    value = int(value)
    if not 0 <= value < 2**64:
        raise ValueError(f"{key}={value} does not fit in 64 bits")
    header[f"{key}.hi"] = float(value >> 32)
    header[f"{key}.lo"] = float(value & 0xFFFFFFFF)


def get_u64(header: dict[str, float], key: str) -> int:
    return (int(header[f"{key}.hi"]) << 32) | int(header[f"{key}.lo"])


def _name(buf: bytearray, name: str) -> None:
    raw = name.encode("utf-8")
    buf += struct.pack("<H", len(raw)) + raw


def write(path, kind: int, header: dict[str, float], blocks: dict[str, np.ndarray]) -> None:
    buf = bytearray(MAGIC)
    buf += struct.pack("<HHI", VERSION, kind, len(header))
    for key, value in header.items():
        _name(buf, key)
        buf += struct.pack("<d", float(value))
    buf += struct.pack("<I", len(blocks))
    for key, arr in blocks.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        _name(buf, key)
        buf += struct.pack("<B", arr.ndim)
        buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
        buf += arr.tobytes()
    Path(path).write_bytes(bytes(buf))


def read(path) -> tuple[int, dict[str, float], dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ContainerError(f"{path}: bad magic {raw[:8]!r}")
    version, kind, n_header = struct.unpack_from("<HHI", raw, 8)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    pos = 16

    def name() -> str:
        nonlocal pos
        (n,) = struct.unpack_from("<H", raw, pos)
        s = raw[pos + 2:pos + 2 + n].decode("utf-8")
        pos += 2 + n
        return s

    header = {}
    for _ in range(n_header):
        key = name()
        (header[key],) = struct.unpack_from("<d", raw, pos)
        pos += 8
    (n_blocks,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    blocks = {}
    for _ in range(n_blocks):
        key = name()
        (ndim,) = struct.unpack_from("<B", raw, pos)
        shape = struct.unpack_from(f"<{ndim}I", raw, pos + 1)
        pos += 1 + 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        blocks[key] = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(shape).copy()
        pos += 4 * count
    if pos != len(raw):
        raise ContainerError(f"{path}: {len(raw) - pos} trailing bytes")
    return kind, header, blocks
