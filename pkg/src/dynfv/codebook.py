"""CBK1 codebook container: a JSON header followed by GMM1 records.

Layout: magic ``CBK1``, u32 header length, UTF-8 JSON header, then one GMM1
record per model in the order listed by the header's ``models`` entry.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

from .exceptions import FormatError
from .fisher import DynFvCodebook
from .gmm import gmm_from_bytes, gmm_to_bytes
from .spatial import LdfvCodebook
from .trajectory import GridSpec, PyramidConfig

_MAGIC = b"CBK1"


def _grid_meta(g):
    return {"crop_size": list(g.crop_size), "cell_size": list(g.cell_size), "overlap": g.overlap}


def _grid_from(meta):
    return GridSpec(tuple(meta["crop_size"]), tuple(meta["cell_size"]), meta["overlap"])


def codebook_to_bytes(cb):
    if isinstance(cb, DynFvCodebook):
        keys = sorted(cb.gmms)
        meta = {"feature": "dynfv", "k": cb.k, "grid": _grid_meta(cb.grid_spec),
                "window_lengths": list(cb.pyramid.window_lengths),
                "fallback": sorted([list(x) for x in cb.fallback]),
                "models": [list(x) for x in keys]}
        models = [cb.gmms[x] for x in keys]
    elif isinstance(cb, LdfvCodebook):
        meta = {"feature": "ldfv", "k": cb.k, "grid": _grid_meta(cb.layout),
                "models": list(range(len(cb.gmms)))}
        models = cb.gmms
    else:
        raise TypeError(f"cannot serialize {type(cb).__name__}")
    head = json.dumps(meta, sort_keys=True).encode()
    return b"".join([_MAGIC, struct.pack("<I", len(head)), head] + [gmm_to_bytes(m) for m in models])


def codebook_from_bytes(buf):
    if bytes(buf[:4]) != _MAGIC:
        raise FormatError(f"expected CBK1 magic, found {bytes(buf[:4])!r}")
    if len(buf) < 8:
        raise FormatError("truncated CBK1 header")
    (n,) = struct.unpack_from("<I", buf, 4)
    try:
        meta = json.loads(bytes(buf[8:8 + n]).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable CBK1 header: {exc}") from None
    pos = 8 + n
    models = []
    for _ in meta["models"]:
        m, pos = gmm_from_bytes(buf, pos)
        models.append(m)
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after CBK1 records")
    grid = _grid_from(meta["grid"])
    if meta["feature"] == "dynfv":
        gmms = {tuple(key): m for key, m in zip(meta["models"], models)}
        return DynFvCodebook(grid, PyramidConfig(tuple(meta["window_lengths"])), meta["k"], gmms,
                             {tuple(x) for x in meta["fallback"]})
    if meta["feature"] == "ldfv":
        return LdfvCodebook(grid, models)
    raise FormatError(f"unknown codebook feature {meta['feature']!r}")


def codebook_feature(cb):
    return "dynfv" if isinstance(cb, DynFvCodebook) else "ldfv"


def save_codebook(path, cb):
    Path(path).write_bytes(codebook_to_bytes(cb))


def load_codebook(path):
    return codebook_from_bytes(Path(path).read_bytes())
