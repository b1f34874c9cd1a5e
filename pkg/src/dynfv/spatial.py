"""Appearance features: LDFV, colour histograms, patch colour means and LBP.

Every feature is computed per frame on a fixed patch layout, restricted to
unmasked pixels, then averaged over frames. Masked pixels are zeroed before
any filtering so their values can never leak into a neighbour's statistics.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .color import convert_color
from .exceptions import CodebookError
from .fisher import derive_seed, fisher_encode_batch, normalize
from .gmm import FitOptions, fit_gmm
from .pooled import PooledFeature
from .trajectory import CROP_SIZE, GridSpec

log = logging.getLogger(__name__)

LDFV_LAYOUT = GridSpec(cell_size=(21, 16))       # 5 x 15 = 75 cells
COLOR_LBP_LAYOUT = GridSpec(cell_size=(16, 8))   # 7 x 31 = 217 cells
HIST_LBP_LAYOUT = LDFV_LAYOUT
LAYOUTS = {"ldfv": LDFV_LAYOUT, "colorlbp": COLOR_LBP_LAYOUT, "histlbp": HIST_LBP_LAYOUT}

LDFV_COMPONENTS = 16
LDFV_DIM = 17
HIST_BINS = 16
# {R, G, B, H, S, V, Y, U} and {H, S, V, L, A, B} as (space, channel index)
HIST_CHANNELS = (("RGB", 0), ("RGB", 1), ("RGB", 2), ("HSV", 0), ("HSV", 1), ("HSV", 2),
                 ("YUV", 0), ("YUV", 1))
MEAN_CHANNELS = (("HSV", 0), ("HSV", 1), ("HSV", 2), ("LAB", 0), ("LAB", 1), ("LAB", 2))
LBP_BINS = 59


def full_mask():
    return np.ones((CROP_SIZE[1], CROP_SIZE[0]), dtype=bool)


def apply_mask(frame, mask):
    """Copy of ``frame`` with masked-out pixels set to zero."""
    if mask is None:
        return np.asarray(frame)
    out = np.array(frame, copy=True)
    out[~np.asarray(mask, dtype=bool)] = 0
    return out


def _mask_or_full(mask):
    return full_mask() if mask is None else np.asarray(mask, dtype=bool)


@lru_cache(maxsize=None)
def cell_pixel_index(layout):
    """(cells, pixels) array of flat raster indices for each cell."""
    width, _ = layout.crop_size
    w, h = layout.cell_size
    ys, xs = np.mgrid[0:h, 0:w]
    offsets = (ys * width + xs).ravel()
    idx = np.array([y0 * width + x0 + offsets for x0, y0 in layout.cell_origins])
    idx.setflags(write=False)
    return idx


def _channels(frame, channels):
    """Stack of the requested ``(space, index)`` channel planes."""
    conv = {space: convert_color(frame, space) for space in {sp for sp, _ in channels}}
    return np.stack([conv[sp][..., i] for sp, i in channels])


def _gradients(plane):
    p = np.pad(plane, 1, mode="edge")
    c = p[1:-1, 1:-1]
    left, right = p[1:-1, :-2], p[1:-1, 2:]
    up, down = p[:-2, 1:-1], p[2:, 1:-1]
    return (right - left) / 2.0, (down - up) / 2.0, right - 2.0 * c + left, down - 2.0 * c + up


def descriptor_image(frame, mask=None):
    """Per-pixel 17-dim local descriptors, shape (128, 64, 17).

    Layout: normalized x, y, then (I, I_x, I_y, I_xx, I_yy) for H, S and V.
    """
    hsv = convert_color(apply_mask(frame, mask), "HSV")
    height, width = hsv.shape[:2]
    ys, xs = np.mgrid[0:height, 0:width]
    planes = [xs / (width - 1), ys / (height - 1)]
    for c in range(3):
        I = hsv[..., c]
        planes.append(I)
        planes.extend(_gradients(I))
    return np.stack(planes, axis=-1)


def ldfv_descriptors(frame, cell, layout=LDFV_LAYOUT, mask=None):
    """Descriptors of the unmasked pixels of one layout cell, (n, 17)."""
    desc = descriptor_image(frame, mask)
    rows, cols = layout.cell_slices()[cell]
    keep = _mask_or_full(mask)[rows, cols]
    return desc[rows, cols][keep]


@dataclass(eq=False)
class LdfvCodebook:
    layout: GridSpec
    gmms: list   # one GmmModel per cell

    def __post_init__(self):
        if len(self.gmms) != self.layout.count:
            raise CodebookError(f"{len(self.gmms)} cell models for a {self.layout.count}-cell layout")
        self.weights = np.stack([m.weights for m in self.gmms])
        self.means = np.stack([m.means for m in self.gmms])
        self.variances = np.stack([m.variances for m in self.gmms])

    @property
    def k(self):
        return self.weights.shape[1]

    @property
    def dim(self):
        return self.layout.count * 2 * self.k * self.means.shape[2]


def _cell_descriptors(frame, mask, layout):
    idx = cell_pixel_index(layout)
    desc = descriptor_image(frame, mask).reshape(-1, LDFV_DIM)
    return desc[idx], _mask_or_full(mask).reshape(-1)[idx]


def train_ldfv_codebook(sequences, layout=LDFV_LAYOUT, k=LDFV_COMPONENTS, seed=0,
                        max_samples=1000, opts=None, threads=1):
    """Fit one GMM per layout cell on descriptors sampled from the frames."""
    opts = opts or FitOptions()
    sequences = list(sequences)
    n_frames = sum(len(s.frames) for s in sequences)
    if n_frames == 0:
        raise CodebookError("no training frames for the LDFV codebook")
    per_frame = max(1, math.ceil(max_samples / n_frames))
    rng = np.random.default_rng(derive_seed(seed, 17))
    samples = [[] for _ in range(layout.count)]
    for s in sequences:
        for frame in s.frames:
            X, keep = _cell_descriptors(frame, s.mask, layout)
            for c in range(layout.count):
                rows = np.flatnonzero(keep[c])
                if rows.size > per_frame:
                    rows = np.sort(rng.choice(rows, per_frame, replace=False))
                samples[c].append(X[c, rows])

    def fit(c):
        data = np.concatenate(samples[c])
        if data.shape[0] < k:
            raise CodebookError(f"LDFV cell {c} has {data.shape[0]} descriptors, need {k}")
        return fit_gmm(data, k, derive_seed(seed, 1000 + c), opts)[0]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        gmms = list(pool.map(fit, range(layout.count)))
    return LdfvCodebook(layout, gmms)


def temporal_average_pool(per_frame):
    """Coordinate-wise mean over frames of PooledFeatures or an (T, D) array."""
    if len(per_frame) and isinstance(per_frame[0], PooledFeature):
        first = per_frame[0]
        mean = np.mean([f.values for f in per_frame], axis=0)
        return PooledFeature(mean, list(first.layout))
    return np.mean(np.asarray(per_frame, dtype=np.float64), axis=0)


def _pooled(name, per_cell):
    return PooledFeature.from_blocks((name, c, 0, v) for c, v in enumerate(per_cell))


def _warn_empty(mask, name):
    if mask is not None and not np.any(mask):
        log.warning("mask excludes every pixel; %s feature is all zeros", name)


def encode_ldfv(seq, codebook, alpha=0.5):
    """Per-cell normalized Fisher vectors averaged over frames."""
    _warn_empty(seq.mask, "LDFV")
    cb = codebook
    frames = []
    for frame in seq.frames:
        X, keep = _cell_descriptors(frame, seq.mask, cb.layout)
        raw = fisher_encode_batch(cb.weights, cb.means, cb.variances, X, keep)
        frames.append(normalize(raw, alpha))
    return _pooled("ldfv", np.mean(frames, axis=0))


def _cell_histograms(codes, keep, n_bins, layout):
    """L1-normalized histograms of integer ``codes`` (..., H, W) per cell."""
    idx = cell_pixel_index(layout)
    flat = codes.reshape(codes.shape[:-2] + (-1,))[..., idx]        # (..., C, n)
    w = keep.reshape(-1)[idx].astype(np.float64)                    # (C, n)
    lead = flat.shape[:-2]
    n_cells = idx.shape[0]
    groups = int(np.prod(lead, dtype=int)) * n_cells
    offsets = (np.arange(groups) * n_bins).reshape(lead + (n_cells, 1))
    counts = np.bincount((flat + offsets).ravel(), np.broadcast_to(w, flat.shape).ravel(),
                         minlength=groups * n_bins).reshape(lead + (n_cells, n_bins))
    total = w.sum(axis=1)[:, None]
    return np.divide(counts, total, out=np.zeros_like(counts), where=total > 0)


def hist_feature(seq, layout=HIST_LBP_LAYOUT):
    """16-bin histograms of R, G, B, H, S, V, Y, U per cell (8 x 16 per cell)."""
    _warn_empty(seq.mask, "histogram")
    keep = _mask_or_full(seq.mask)
    out = []
    for frame in seq.frames:
        ch = _channels(apply_mask(frame, seq.mask), HIST_CHANNELS)
        bins = np.minimum((ch * HIST_BINS).astype(np.int64), HIST_BINS - 1)
        h = _cell_histograms(bins, keep, HIST_BINS, layout)          # (8, C, 16)
        out.append(h.transpose(1, 0, 2).reshape(layout.count, -1))
    return _pooled("hist", np.mean(out, axis=0))


def mean_color_feature(seq, layout=COLOR_LBP_LAYOUT):
    """Mean of H, S, V, L, A, B over the unmasked pixels of each cell."""
    _warn_empty(seq.mask, "colour mean")
    keep = _mask_or_full(seq.mask)
    idx = cell_pixel_index(layout)
    w = keep.reshape(-1)[idx].astype(np.float64)
    total = w.sum(axis=1)
    out = []
    for frame in seq.frames:
        ch = _channels(apply_mask(frame, seq.mask), MEAN_CHANNELS).reshape(6, -1)[:, idx]
        sums = np.einsum("kcn,cn->ck", ch, w)
        out.append(np.divide(sums, total[:, None], out=np.zeros_like(sums),
                             where=total[:, None] > 0))
    return _pooled("mean", np.mean(out, axis=0))


# (dy, dx) of the 8 radius-1 neighbours; bit i is set when neighbour i is brighter.
LBP_NEIGHBOURS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


def _transitions(code):
    bits = [(code >> i) & 1 for i in range(8)]
    return sum(bits[i] != bits[(i + 1) % 8] for i in range(8))


def _uniform_table():
    table = np.full(256, LBP_BINS - 1, dtype=np.int64)
    nxt = 0
    for code in range(256):
        if _transitions(code) <= 2:
            table[code] = nxt
            nxt += 1
    assert nxt == LBP_BINS - 1
    return table


UNIFORM_LBP_BIN = _uniform_table()


def lbp_codes(gray):
    """8-neighbour radius-1 LBP codes with replicated borders, (H, W) uint8."""
    g = np.asarray(gray, dtype=np.float64)
    p = np.pad(g, 1, mode="edge")
    h, w = g.shape
    code = np.zeros((h, w), dtype=np.uint8)
    for bit, (dy, dx) in enumerate(LBP_NEIGHBOURS):
        code |= (p[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] > g).astype(np.uint8) << bit
    return code


def lbp_feature(seq, layout=HIST_LBP_LAYOUT):
    """59-bin uniform LBP histograms of the gray channel per cell."""
    _warn_empty(seq.mask, "LBP")
    keep = _mask_or_full(seq.mask)
    out = []
    for frame in seq.frames:
        gray = convert_color(apply_mask(frame, seq.mask), "GRAY")[..., 0]
        bins = UNIFORM_LBP_BIN[lbp_codes(gray)]
        out.append(_cell_histograms(bins, keep, LBP_BINS, layout))
    return _pooled("lbp", np.mean(out, axis=0))


def color_lbp_feature(seq):
    return PooledFeature.concatenate([mean_color_feature(seq, COLOR_LBP_LAYOUT),
                                      lbp_feature(seq, COLOR_LBP_LAYOUT)])


def hist_lbp_feature(seq):
    return PooledFeature.concatenate([hist_feature(seq, HIST_LBP_LAYOUT),
                                      lbp_feature(seq, HIST_LBP_LAYOUT)])
