"""Concatenated feature vectors with a block layout, and the FVE1 file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, FormatError


@dataclass(frozen=True)
class Block:
    name: str
    grid: int
    level: int
    offset: int
    length: int


@dataclass(eq=False)
class PooledFeature:
    values: np.ndarray
    layout: list

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        pos = 0
        for b in self.layout:
            if b.offset != pos:
                raise DimensionError(f"block {b} does not start at offset {pos}")
            pos += b.length
        if pos != self.values.size:
            raise DimensionError(f"layout covers {pos} values, vector has {self.values.size}")

    @property
    def dim(self):
        return self.values.size

    def block(self, name, grid, level=0):
        for b in self.layout:
            if (b.name, b.grid, b.level) == (name, grid, level):
                return self.values[b.offset:b.offset + b.length]
        raise KeyError((name, grid, level))

    def blocks(self):
        for b in self.layout:
            yield b, self.values[b.offset:b.offset + b.length]

    @classmethod
    def from_blocks(cls, items):
        """Build from ``[(name, grid, level, values), ...]`` in order."""
        layout, parts, pos = [], [], 0
        for name, grid, level, vals in items:
            vals = np.asarray(vals, dtype=np.float64).reshape(-1)
            layout.append(Block(name, int(grid), int(level), pos, vals.size))
            parts.append(vals)
            pos += vals.size
        values = np.concatenate(parts) if parts else np.empty(0)
        return cls(values, layout)

    @classmethod
    def concatenate(cls, features):
        return cls.from_blocks(
            (b.name, b.grid, b.level, v) for f in features for b, v in f.blocks())

    def same_layout(self, other):
        return [(b.name, b.grid, b.level, b.length) for b in self.layout] == \
            [(b.name, b.grid, b.level, b.length) for b in other.layout]


_FVE_MAGIC = b"FVE1"


def feature_to_bytes(f):
    out = [_FVE_MAGIC, struct.pack("<I", len(f.layout))]
    for b in f.layout:
        name = b.name.encode("utf-8")
        out.append(struct.pack("<I", len(name)) + name + struct.pack("<III", b.grid, b.level, b.length))
    out.append(f.values.astype("<f4").tobytes())
    return b"".join(out)


def feature_from_bytes(buf):
    if bytes(buf[:4]) != _FVE_MAGIC:
        raise FormatError(f"expected FVE1 magic, found {bytes(buf[:4])!r}")
    try:
        (count,) = struct.unpack_from("<I", buf, 4)
        pos = 8
        items = []
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, pos)
            name = bytes(buf[pos + 4:pos + 4 + n]).decode("utf-8")
            pos += 4 + n
            grid, level, length = struct.unpack_from("<III", buf, pos)
            pos += 12
            items.append((name, grid, level, length))
    except struct.error as exc:
        raise FormatError(f"truncated FVE1 header: {exc}") from None
    total = sum(it[3] for it in items)
    if len(buf) - pos != 4 * total:
        raise FormatError(f"FVE1 body holds {len(buf) - pos} bytes, expected {4 * total}")
    values = np.frombuffer(buf, dtype="<f4", count=total, offset=pos).astype(np.float64)
    layout, off = [], 0
    for name, grid, level, length in items:
        layout.append(Block(name, grid, level, off, length))
        off += length
    return PooledFeature(values, layout)


def save_feature(path, f):
    Path(path).write_bytes(feature_to_bytes(f))


def load_feature(path):
    return feature_from_bytes(Path(path).read_bytes())
