"""Fisher-vector encoding and the pooled dynamics descriptor (DynFV).

The raw Fisher vector of a set ``X`` under a diagonal GMM stacks, for each
component ``i``, the normalized gradients with respect to the mean and the
standard deviation::

    F_mu[i]    = 1/(N sqrt(pi_i))  * sum_n gamma_n(i) (x_n - mu_i) / sigma_i
    F_sigma[i] = 1/(N sqrt(2 pi_i)) * sum_n gamma_n(i) ((x_n - mu_i)^2 / sigma_i^2 - 1)

with all the mean blocks first, then all the sigma blocks.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import CodebookError, DimensionError
from .gmm import FitOptions, fit_gmm, responsibilities
from .pooled import PooledFeature
from .trajectory import (DYNFV_GRID, GridSpec, PyramidConfig, assign_grids,
                         new_diagnostics, to_velocities, window_matrix)

log = logging.getLogger(__name__)

DYNFV_COMPONENTS = 12


@dataclass(frozen=True, eq=False)
class FisherVector:
    values: np.ndarray
    k: int
    dim: int

    @property
    def block_map(self):
        """``(component, 'mu' | 'sigma')`` for each consecutive dim-sized chunk."""
        return [(i, "mu") for i in range(self.k)] + [(i, "sigma") for i in range(self.k)]

    def __len__(self):
        return self.values.size


def _moments(gamma, X, means):
    """Zeroth, first and centred second moments, accumulated about each mean."""
    s0 = gamma.sum(axis=0)
    centre = means.mean(axis=0)
    Xc = X - centre
    mc = means - centre
    s1 = gamma.T @ Xc - s0[:, None] * mc
    s2 = gamma.T @ (Xc * Xc) - 2.0 * mc * (gamma.T @ Xc) + s0[:, None] * mc * mc
    return s0, s1, s2


def fisher_encode(m, X):
    """Raw (un-normalized) Fisher vector of ``X`` under ``m``; empty X gives zeros."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        X = np.empty((0, m.dim))
    X = np.atleast_2d(X)
    if X.ndim != 2 or X.shape[1] != m.dim:
        raise DimensionError(f"data of shape {X.shape} does not match model dimension {m.dim}")
    n = X.shape[0]
    if n == 0:
        return FisherVector(np.zeros(2 * m.k * m.dim), m.k, m.dim)
    gamma = responsibilities(m, X)
    s0, s1, s2 = _moments(gamma, X, m.means)
    sigma = np.sqrt(m.variances)
    f_mu = s1 / sigma / (n * np.sqrt(m.weights))[:, None]
    f_sigma = (s2 / m.variances - s0[:, None]) / (n * np.sqrt(2.0 * m.weights))[:, None]
    return FisherVector(np.concatenate([f_mu.ravel(), f_sigma.ravel()]), m.k, m.dim)


def fisher_encode_batch(weights, means, variances, X, mask):
    """Encode C independent sets against C models in one vectorized pass.

    ``weights`` (C, k), ``means``/``variances`` (C, k, d), ``X`` (C, n, d) and a
    boolean ``mask`` (C, n) choosing which rows of each set take part. Sets
    with no selected rows return zeros. Returns (C, 2 k d) raw vectors.
    """
    C, k, d = means.shape
    centre = means.mean(axis=1, keepdims=True)
    Xc = X - centre
    mc = means - centre
    inv = 1.0 / variances
    quad = (np.matmul(Xc * Xc, inv.transpose(0, 2, 1))
            - 2.0 * np.matmul(Xc, (mc * inv).transpose(0, 2, 1))
            + np.sum(mc * mc * inv, axis=2)[:, None, :])
    np.maximum(quad, 0.0, out=quad)
    log_norm = -0.5 * (d * np.log(2 * np.pi) + np.sum(np.log(variances), axis=2))
    lp = np.log(weights)[:, None, :] + log_norm[:, None, :] - 0.5 * quad
    lp -= lp.max(axis=2, keepdims=True)
    gamma = np.exp(lp, out=lp)
    gamma *= (mask / gamma.sum(axis=2))[:, :, None]

    gT = gamma.transpose(0, 2, 1)
    s0 = gamma.sum(axis=1)
    g1 = np.matmul(gT, Xc)
    s1 = g1 - s0[:, :, None] * mc
    s2 = np.matmul(gT, Xc * Xc) - 2.0 * mc * g1 + s0[:, :, None] * mc * mc
    n = mask.sum(axis=1).astype(np.float64)
    safe_n = np.where(n > 0, n, 1.0)[:, None]
    f_mu = s1 / np.sqrt(variances) / (safe_n * np.sqrt(weights))[:, :, None]
    f_sigma = (s2 * inv - s0[:, :, None]) / (safe_n * np.sqrt(2.0 * weights))[:, :, None]
    out = np.concatenate([f_mu.reshape(C, -1), f_sigma.reshape(C, -1)], axis=1)
    out[n == 0] = 0.0
    return out


def _values(f):
    return f.values if isinstance(f, FisherVector) else np.asarray(f, dtype=np.float64)


def _rewrap(f, values):
    return FisherVector(values, f.k, f.dim) if isinstance(f, FisherVector) else values


def power_normalize(f, alpha=0.5):
    v = _values(f)
    return _rewrap(f, np.sign(v) * np.abs(v) ** alpha)


def l2_normalize(f):
    v = _values(f)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    return _rewrap(f, np.divide(v, norm, out=np.zeros_like(v), where=norm > 0))


def normalize(f, alpha=0.5):
    """Signed power normalization followed by L2 normalization."""
    return l2_normalize(power_normalize(f, alpha))


@dataclass(eq=False)
class DynFvCodebook:
    grid_spec: GridSpec
    pyramid: PyramidConfig
    k: int
    gmms: dict                  # (grid, level) -> GmmModel
    fallback: set = field(default_factory=set)

    def model(self, g, a):
        try:
            return self.gmms[(g, a)]
        except KeyError:
            raise CodebookError(f"codebook has no model for grid {g}, level {a}") from None

    @property
    def dim(self):
        return sum(2 * self.k * 2 * a for a in self.pyramid.window_lengths) * self.grid_spec.count


def collect_windows(tracklets, grid=DYNFV_GRID, pyramid=PyramidConfig(), mask=None,
                    diagnostics=None):
    """Flattened velocity windows grouped by ``(grid, level)``.

    Returns a dict mapping each pair to an (n, 2a) array; pairs with no
    windows are absent. Windows keep tracklet order, then offset order.
    """
    parts = {}
    for t in tracklets:
        cells = assign_grids(t, grid, mask, diagnostics)
        if not cells:
            continue
        v = to_velocities(t)
        for a in pyramid.window_lengths:
            if a > len(v):
                if diagnostics is not None:
                    diagnostics["window_too_long"] += 1
                continue
            w = window_matrix(v, a)
            for g in cells:
                parts.setdefault((g, a), []).append(w)
    return {key: np.concatenate(chunks) for key, chunks in parts.items()}


def derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def train_dynfv_codebook(sequences, grid=DYNFV_GRID, pyramid=PyramidConfig(),
                         k=DYNFV_COMPONENTS, seed=0, masks=None, opts=None, threads=1):
    """One GMM per (grid, level), fitted on windows pooled over ``sequences``.

    ``sequences`` is an iterable of tracklet lists; ``masks`` an optional
    parallel list of camera masks. Cells with fewer than ``k`` windows fall
    back to a model fitted on that level's windows from every grid.
    """
    opts = opts or FitOptions(max_samples=4000)
    sequences = list(sequences)
    masks = list(masks) if masks is not None else [None] * len(sequences)
    pooled = {}
    for trk, mask in zip(sequences, masks):
        for key, w in collect_windows(trk, grid, pyramid, mask).items():
            pooled.setdefault(key, []).append(w)
    windows = {key: np.concatenate(v) for key, v in pooled.items()}

    jobs, fallback = {}, set()
    for a in pyramid.window_lengths:
        level = [windows[(g, a)] for g in range(grid.count) if (g, a) in windows]
        if not level:
            raise CodebookError(f"no training windows of length {a} in any grid")
        for g in range(grid.count):
            w = windows.get((g, a))
            if w is not None and w.shape[0] >= k:
                jobs[(g, a)] = w
            else:
                fallback.add((g, a))
        if any(key[1] == a for key in fallback):
            everything = np.concatenate(level)
            if everything.shape[0] < k:
                raise CodebookError(
                    f"only {everything.shape[0]} windows of length {a}; need at least {k}")
            jobs[("pooled", a)] = everything

    def fit(item):
        key, data = item
        g = -1 if key[0] == "pooled" else key[0]
        return key, fit_gmm(data, k, derive_seed(seed, g + 1, key[1]), opts)[0]

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        fitted = dict(pool.map(fit, sorted(jobs.items(), key=lambda kv: (str(kv[0][0]), kv[0][1]))))

    gmms = {}
    for g in range(grid.count):
        for a in pyramid.window_lengths:
            gmms[(g, a)] = fitted[("pooled", a)] if (g, a) in fallback else fitted[(g, a)]
    if fallback:
        log.info("%d starved (grid, level) cells use the pooled level model", len(fallback))
    return DynFvCodebook(grid, pyramid, k, gmms, fallback)


def encode_dynfv(tracklets, cb, mask=None, alpha=0.5, diagnostics=None):
    """Pooled DynFV descriptor: normalized FV per (grid, level), grid-major."""
    diagnostics = diagnostics if diagnostics is not None else new_diagnostics()
    windows = collect_windows(tracklets, cb.grid_spec, cb.pyramid, mask, diagnostics)
    if not windows:
        diagnostics["empty_sequence"] += 1
        log.warning("sequence produced no windows; DynFV feature is all zeros")
    items = []
    for g in range(cb.grid_spec.count):
        for a in cb.pyramid.window_lengths:
            m = cb.model(g, a)
            if m.dim != 2 * a:
                raise CodebookError(f"model ({g}, {a}) has dim {m.dim}, expected {2 * a}")
            w = windows.get((g, a))
            if w is None:
                vals = np.zeros(2 * m.k * m.dim)
            else:
                vals = normalize(fisher_encode(m, w).values, alpha)
            items.append(("dynfv", g, a, vals))
    return PooledFeature.from_blocks(items)
