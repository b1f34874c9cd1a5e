"""Tracklets, velocity form, Hankelets, temporal pyramids and grid assignment.

Coordinates live in the normalized 64x128 person crop: ``x`` runs along the
width (0..64) and ``y`` along the height (0..128). Rasters such as masks are
indexed ``[y, x]``.
"""
from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import DimensionError, InvalidTrackletError, ParseError

CROP_SIZE = (64, 128)


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Tracklet:
    start_frame: int
    points: np.ndarray  # (L, 2) positions

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidTrackletError(f"points must have shape (L, 2), got {pts.shape}")
        if pts.shape[0] < 2:
            raise InvalidTrackletError(f"tracklet needs at least 2 points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise InvalidTrackletError("tracklet has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]

    @property
    def start(self):
        return float(self.points[0, 0]), float(self.points[0, 1])


@dataclass(frozen=True, eq=False)
class VelocityTracklet:
    deltas: np.ndarray  # (l, 2)

    def __post_init__(self):
        d = _frozen(self.deltas)
        if d.ndim != 2 or d.shape[1] != 2:
            raise InvalidTrackletError(f"deltas must have shape (l, 2), got {d.shape}")
        object.__setattr__(self, "deltas", d)

    def __len__(self):
        return self.deltas.shape[0]

    def flatten(self):
        """Interleaved ``(dx1, dy1, ..., dxa, dya)`` vector."""
        return self.deltas.reshape(-1)


@dataclass(frozen=True, eq=False)
class HankelMatrix:
    rows: int  # block rows
    cols: int
    block_dim: int
    entries: np.ndarray  # (rows * block_dim, cols)

    def block(self, i, j):
        d = self.block_dim
        return self.entries[i * d:(i + 1) * d, j]

    def is_block_hankel(self):
        """Exact check that blocks are constant along every anti-diagonal."""
        for s in range(self.rows + self.cols - 1):
            cells = [(i, s - i) for i in range(self.rows) if 0 <= s - i < self.cols]
            first = self.block(*cells[0])
            if any(not np.array_equal(first, self.block(i, j)) for i, j in cells[1:]):
                return False
        return True


@dataclass(frozen=True)
class GridSpec:
    """Overlapping rectangular cells tiling the crop.

    Origins along each axis are ``round(i * stride)`` with
    ``stride = cell * (1 - overlap)``, for as many cells as fit in the crop.
    """

    crop_size: tuple = CROP_SIZE
    cell_size: tuple = (32, 36)
    overlap: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must be in [0, 1), got {self.overlap}")
        for c, s in zip(self.cell_size, self.crop_size):
            if not 0 < c <= s:
                raise ValueError(f"cell size {self.cell_size} does not fit crop {self.crop_size}")

    @staticmethod
    def _axis_origins(crop, cell, overlap):
        stride = cell * (1.0 - overlap)
        n = int(math.floor((crop - cell) / stride + 1e-9)) + 1
        return tuple(int(math.floor(i * stride + 0.5)) for i in range(n))

    @property
    def x_origins(self):
        return self._axis_origins(self.crop_size[0], self.cell_size[0], self.overlap)

    @property
    def y_origins(self):
        return self._axis_origins(self.crop_size[1], self.cell_size[1], self.overlap)

    @property
    def shape(self):
        """(rows, cols) of the cell lattice."""
        return len(self.y_origins), len(self.x_origins)

    @property
    def count(self):
        rows, cols = self.shape
        return rows * cols

    @property
    def cell_origins(self):
        """Top-left corners in row-major order (cell index = row * cols + col)."""
        return [(x0, y0) for y0 in self.y_origins for x0 in self.x_origins]

    def cell_slices(self):
        w, h = self.cell_size
        return [(slice(y0, y0 + h), slice(x0, x0 + w)) for x0, y0 in self.cell_origins]

    def cells_containing(self, x, y):
        w, h = self.cell_size
        xs, ys = self.x_origins, self.y_origins

        def hits(origins, size, v):
            last = len(origins) - 1
            return [i for i, o in enumerate(origins)
                    if o <= v < o + size or (i == last and v == o + size)]

        cols = hits(xs, w, x)
        return [r * len(xs) + c for r in hits(ys, h, y) for c in cols]


@dataclass(frozen=True)
class PyramidConfig:
    window_lengths: tuple = (5, 9, 14)
    stride: int = field(default=1, init=False)

    def __post_init__(self):
        lengths = tuple(sorted({int(a) for a in self.window_lengths}))
        if not lengths or lengths[0] < 1:
            raise ValueError(f"window lengths must be positive, got {self.window_lengths}")
        object.__setattr__(self, "window_lengths", lengths)


DYNFV_GRID = GridSpec()


def parse_trajectory_file(path):
    """Read a TRK file into ``[(sequence_id, Tracklet), ...]`` in file order.

    Records with non-finite coordinates are dropped and counted in a single
    ``RuntimeWarning``.
    """
    records = []
    rejected = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) < 6:
                raise ParseError("expected 'sequence_id start_frame x1 y1 x2 y2 ...'", lineno)
            seq_id = tokens[0]
            try:
                start = int(tokens[1])
                coords = [float(t) for t in tokens[2:]]
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if len(coords) % 2:
                raise ParseError("odd number of coordinates", lineno)
            pts = np.asarray(coords).reshape(-1, 2)
            if not np.all(np.isfinite(pts)):
                rejected += 1
                continue
            records.append((seq_id, Tracklet(start, pts)))
    if rejected:
        warnings.warn(f"{path}: rejected {rejected} record(s) with non-finite coordinates",
                      RuntimeWarning, stacklevel=2)
    return records


def write_trajectory_file(path, records):
    lines = []
    for seq_id, t in records:
        coords = " ".join(repr(float(v)) for v in t.points.reshape(-1))
        lines.append(f"{seq_id} {t.start_frame} {coords}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def group_by_sequence(records):
    out = {}
    for seq_id, t in records:
        out.setdefault(seq_id, []).append(t)
    return out


def to_velocities(t):
    if len(t.points) < 2:
        raise InvalidTrackletError("need at least 2 points to form velocities")
    return VelocityTracklet(np.diff(t.points, axis=0))


def build_hankel(v, num_block_rows):
    """Block Hankel matrix whose (i, j) block is sample ``i + j``.

    ``v`` may be a :class:`VelocityTracklet`, a 1-D scalar sequence or an
    ``(l, d)`` array of d-dimensional samples.
    """
    seq = v.deltas if isinstance(v, VelocityTracklet) else np.asarray(v, dtype=np.float64)
    if seq.ndim == 1:
        seq = seq[:, None]
    length, d = seq.shape
    if not 1 <= num_block_rows <= length:
        raise DimensionError(f"{num_block_rows} block rows need 1 <= rows <= {length}")
    cols = length - num_block_rows + 1
    # windows[j] holds samples j .. j+rows-1 stacked, i.e. column j.
    windows = sliding_window_view(seq, num_block_rows, axis=0)  # (cols, d, rows)
    entries = np.ascontiguousarray(windows.transpose(0, 2, 1).reshape(cols, -1).T)
    return HankelMatrix(num_block_rows, cols, d, entries)


def window_matrix(v, a):
    """All stride-1 windows of length ``a`` as flattened ``2a`` rows."""
    deltas = v.deltas if isinstance(v, VelocityTracklet) else np.asarray(v, dtype=np.float64)
    n = deltas.shape[0] - a + 1
    if n <= 0:
        return np.empty((0, 2 * a))
    return sliding_window_view(deltas, a, axis=0).transpose(0, 2, 1).reshape(n, 2 * a)


def pyramid_windows(v, a, diagnostics=None):
    """Sliding windows of length ``a``; empty (and counted) when ``a > l``."""
    if a > len(v):
        if diagnostics is not None:
            diagnostics["window_too_long"] += 1
        return []
    return [VelocityTracklet(v.deltas[j:j + a]) for j in range(len(v) - a + 1)]


def assign_grids(t, g=DYNFV_GRID, mask=None, diagnostics=None):
    """Indices of every grid cell containing the tracklet's starting point."""
    x, y = t.start
    w, h = g.crop_size
    if not (0 <= x <= w and 0 <= y <= h):
        if diagnostics is not None:
            diagnostics["start_outside_crop"] += 1
        return []
    if mask is not None:
        row = min(int(y), mask.shape[0] - 1)
        col = min(int(x), mask.shape[1] - 1)
        if not mask[row, col]:
            if diagnostics is not None:
                diagnostics["start_masked"] += 1
            return []
    cells = g.cells_containing(x, y)
    if not cells and diagnostics is not None:
        # the default lattice stops at y = 126, short of the crop's bottom rows
        diagnostics["start_uncovered"] += 1
    return cells


def new_diagnostics():
    return Counter()
