"""Diagonal-covariance Gaussian mixtures fitted by EM from k-means++ seeds."""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, FormatError, InsufficientDataError

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-4
MIN_WEIGHT = 1e-8
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GmmModel:
    weights: np.ndarray    # (k,)
    means: np.ndarray      # (k, dim)
    variances: np.ndarray  # (k, dim)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        mu = np.atleast_2d(np.array(self.means, dtype=np.float64))
        var = np.atleast_2d(np.array(self.variances, dtype=np.float64))
        if w.ndim != 1 or mu.shape != var.shape or mu.shape[0] != w.shape[0]:
            raise DimensionError(
                f"inconsistent shapes: weights {w.shape}, means {mu.shape}, variances {var.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(var))):
            raise ValueError("GMM parameters must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        for a in (w, mu, var):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def k(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    def __eq__(self, other):
        if not isinstance(other, GmmModel):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.means, other.means)
                and np.array_equal(self.variances, other.variances))


@dataclass
class FitOptions:
    max_iter: int = 100
    tol: float = 1e-6           # relative change in mean log-likelihood
    kmeans_iter: int = 10
    variance_floor: float = VARIANCE_FLOOR
    max_samples: int | None = None  # random subsample before fitting


@dataclass
class FitReport:
    iterations: int
    final_log_likelihood: float
    converged: bool
    seed: int
    log_likelihoods: list = field(default_factory=list)
    reseeded: list = field(default_factory=list)  # (iteration, component)


def weighted_log_densities(X, weights, means, variances):
    """``log pi_i + log N(x_n | mu_i, diag(var_i))`` as an (N, k) array.

    The quadratic form is expanded into matrix products after shifting data
    and means by a common centre, which keeps cancellation error small.
    """
    centre = means.mean(axis=0)
    Xc = X - centre
    mc = means - centre
    inv = 1.0 / variances
    quad = (Xc * Xc) @ inv.T - 2.0 * Xc @ (mc * inv).T + np.sum(mc * mc * inv, axis=1)
    np.maximum(quad, 0.0, out=quad)
    log_norm = -0.5 * (means.shape[1] * _LOG_2PI + np.sum(np.log(variances), axis=1))
    return np.log(weights) + log_norm - 0.5 * quad


def _stacked_log_densities(XX, weights, means, variances):
    """(k, N) weighted log-densities from ``XX = [X**2, X]`` (centred data).

    Components along the first axis keep the per-sample reductions over k
    running across contiguous rows.
    """
    inv = 1.0 / variances
    W = np.hstack([inv, -2.0 * means * inv])
    const = (np.log(weights) - 0.5 * (means.shape[1] * _LOG_2PI + np.sum(np.log(variances), axis=1))
             - 0.5 * np.sum(means * means * inv, axis=1))
    quad = W @ XX.T
    return const[:, None] - 0.5 * quad


def _normalize_columns(lp):
    top = lp.max(axis=0)
    e = np.exp(lp - top)
    total = e.sum(axis=0)
    e /= total
    return np.log(total) + top, e


def log_normalize(lp):
    """Row-wise log-sum-exp and the matching posteriors of an (N, k) array."""
    top = lp.max(axis=1, keepdims=True)
    e = np.exp(lp - top)
    total = e.sum(axis=1, keepdims=True)
    e /= total
    return (np.log(total) + top)[:, 0], e


def _check_data(m, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != m.dim:
        raise DimensionError(f"data dimension {X.shape[1]} != model dimension {m.dim}")
    return X


def responsibilities(m, x):
    """Posterior component probabilities for one vector (k,) or a batch (N, k)."""
    single = np.ndim(x) == 1
    X = _check_data(m, x)
    _, gamma = log_normalize(weighted_log_densities(X, m.weights, m.means, m.variances))
    return gamma[0] if single else gamma


def log_likelihood(m, data):
    """Mean per-sample log-likelihood of ``data`` under ``m``."""
    X = _check_data(m, data)
    if X.shape[0] == 0:
        raise ValueError("log-likelihood of an empty data set is undefined")
    lse, _ = log_normalize(weighted_log_densities(X, m.weights, m.means, m.variances))
    return float(np.mean(lse))


def kmeans_plusplus(X, k, rng):
    """D^2-weighted seeding; indices of the chosen centres."""
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = np.sum((X - X[idx[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, np.sum((X - X[nxt]) ** 2, axis=1))
    return np.array(idx)


def kmeans(X, k, rng, n_iter=10):
    """Lloyd iterations from k-means++ seeds; empty clusters keep their centre."""
    centres = X[kmeans_plusplus(X, k, rng)].copy()
    sq = np.sum(X * X, axis=1)[:, None]
    labels = np.argmin(sq - 2.0 * X @ centres.T + np.sum(centres * centres, axis=1), axis=1)
    for _ in range(n_iter):
        counts = np.bincount(labels, minlength=k)
        onehot = np.zeros((k, X.shape[0]))
        onehot[labels, np.arange(X.shape[0])] = 1.0
        sums = onehot @ X
        filled = counts > 0
        centres[filled] = sums[filled] / counts[filled, None]
        labels = np.argmin(sq - 2.0 * X @ centres.T + np.sum(centres * centres, axis=1), axis=1)
    return centres, labels


def _init_from_kmeans(X, k, rng, opts):
    centres, labels = kmeans(X, k, rng, opts.kmeans_iter)
    n, dim = X.shape
    global_var = np.maximum(X.var(axis=0), opts.variance_floor)
    weights = np.empty(k)
    variances = np.empty((k, dim))
    for j in range(k):
        members = X[labels == j]
        weights[j] = max(len(members), 1)
        variances[j] = members.var(axis=0) if len(members) > 1 else global_var
    weights /= weights.sum()
    return weights, centres, np.maximum(variances, opts.variance_floor)


def fit_gmm(data, k, seed=0, opts=None):
    """Fit a k-component diagonal GMM; returns ``(GmmModel, FitReport)``.

    Single-threaded runs are bit-reproducible for a given ``seed``.
    """
    opts = opts or FitOptions()
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"data must be (N, dim), got shape {X.shape}")
    if X.shape[0] < k:
        raise InsufficientDataError(f"{X.shape[0]} samples cannot support {k} components")
    if not np.all(np.isfinite(X)):
        raise ValueError("training data contains non-finite values")
    rng = np.random.default_rng(seed)
    if opts.max_samples is not None and X.shape[0] > opts.max_samples:
        X = X[np.sort(rng.choice(X.shape[0], opts.max_samples, replace=False))]

    shift = X.mean(axis=0)
    X = X - shift
    X2 = X * X
    XX = np.hstack([X2, X])
    n = X.shape[0]
    weights, means, variances = _init_from_kmeans(X, k, rng, opts)

    trace, reseeded = [], []
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        lse, resp = _normalize_columns(_stacked_log_densities(XX, weights, means, variances))
        ll = float(lse.mean())
        if trace and abs(ll - trace[-1]) < opts.tol * abs(trace[-1]):
            trace.append(ll)
            converged = True
            break
        trace.append(ll)

        nk = resp.sum(axis=1)
        weights = nk / n
        dead = np.flatnonzero(weights < MIN_WEIGHT)
        nk_safe = np.maximum(nk, np.finfo(float).tiny)
        moments = (resp @ XX) / nk_safe[:, None]
        d = X.shape[1]
        means = moments[:, d:]
        variances = moments[:, :d] - means * means
        np.maximum(variances, opts.variance_floor, out=variances)
        if dead.size:
            # least likely points under the current model
            order = np.argsort(lse, kind="stable")
            for rank, j in enumerate(dead):
                means[j] = X[order[rank % n]]
                variances[j] = np.maximum(X.var(axis=0), opts.variance_floor)
                weights[j] = 1.0 / n
                reseeded.append((it, int(j)))
                log.info("re-seeded degenerate component %d at iteration %d", j, it)
            weights /= weights.sum()
    else:
        lse, _ = _normalize_columns(_stacked_log_densities(XX, weights, means, variances))
        trace.append(float(lse.mean()))

    model = GmmModel(weights / weights.sum(), means + shift, variances)
    return model, FitReport(it, trace[-1], converged, seed, trace, reseeded)


_GMM_MAGIC = b"GMM1"


def gmm_to_bytes(m):
    head = _GMM_MAGIC + struct.pack("<II", m.k, m.dim)
    body = np.concatenate([m.weights, m.means.ravel(), m.variances.ravel()]).astype("<f8")
    return head + body.tobytes()


def gmm_from_bytes(buf, offset=0):
    """Decode one GMM1 record; returns ``(model, next_offset)``."""
    if bytes(buf[offset:offset + 4]) != _GMM_MAGIC:
        raise FormatError(f"expected GMM1 magic, found {bytes(buf[offset:offset + 4])!r}")
    if len(buf) < offset + 12:
        raise FormatError("truncated GMM1 header")
    k, dim = struct.unpack_from("<II", buf, offset + 4)
    count = k + 2 * k * dim
    start = offset + 12
    end = start + 8 * count
    if len(buf) < end:
        raise FormatError("truncated GMM1 body")
    vals = np.frombuffer(buf, dtype="<f8", count=count, offset=start).astype(np.float64)
    w = vals[:k]
    mu = vals[k:k + k * dim].reshape(k, dim)
    var = vals[k + k * dim:].reshape(k, dim)
    return GmmModel(w, mu, var), end


def save_gmm(path, m):
    Path(path).write_bytes(gmm_to_bytes(m))


def load_gmm(path):
    buf = Path(path).read_bytes()
    m, end = gmm_from_bytes(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after GMM1 record")
    return m
