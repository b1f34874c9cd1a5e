"""Distances, min-max score fusion, ranking, CMC curves and PUR."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DimensionError, ProtocolError

REPORT_RANKS = (1, 5, 10, 20)


@dataclass(eq=False)
class DistanceMatrix:
    probes: list
    gallery: list
    values: np.ndarray
    feature_name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.probes), len(self.gallery)):
            raise DimensionError(
                f"distance values {self.values.shape} do not match "
                f"{len(self.probes)} probes x {len(self.gallery)} gallery")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("distance matrix has non-finite entries")

    def to_json(self):
        return {"feature": self.feature_name, "probes": list(self.probes),
                "gallery": list(self.gallery), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["probes"], obj["gallery"], np.array(obj["values"]), obj.get("feature", ""))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def _as_matrix(features):
    if isinstance(features, dict):
        return list(features), np.stack([np.asarray(getattr(v, "values", v)) for v in features.values()])
    return list(range(len(features))), np.stack([np.asarray(getattr(v, "values", v)) for v in features])


def euclidean_distances(probes, gallery, feature_name=""):
    """Probe x gallery Euclidean distances.

    ``probes`` and ``gallery`` are dicts (id -> vector or PooledFeature) or
    sequences of vectors (ids become positions).
    """
    pids, P = _as_matrix(probes)
    gids, G = _as_matrix(gallery)
    if P.shape[1] != G.shape[1]:
        raise DimensionError(
            f"feature {feature_name or '?'}: probe dimension {P.shape[1]} "
            f"!= gallery dimension {G.shape[1]}")
    return DistanceMatrix(pids, gids, cdist(P, G), feature_name)


def min_max_normalize(d):
    v = d.values
    lo, hi = v.min(), v.max()
    return (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)


def min_max_fuse(matrices, feature_name=None):
    """Sum of globally min-max normalized distance matrices."""
    matrices = list(matrices)
    if not matrices:
        raise ValueError("nothing to fuse")
    first = matrices[0]
    for d in matrices[1:]:
        if list(d.probes) != list(first.probes) or list(d.gallery) != list(first.gallery):
            raise ProtocolError(
                f"cannot fuse {d.feature_name!r} with {first.feature_name!r}: id lists differ")
    total = sum(min_max_normalize(d) for d in matrices)
    name = feature_name or "+".join(d.feature_name for d in matrices)
    return DistanceMatrix(first.probes, first.gallery, total, name)


def match_ranks(d, truth):
    """1-based rank of each probe's true match; ties go to earlier gallery entries."""
    index = {g: j for j, g in enumerate(d.gallery)}
    missing = [p for p in d.probes if truth.get(p) not in index]
    if missing:
        raise ProtocolError(f"true match absent from gallery for probes {missing}")
    ranks = np.empty(len(d.probes), dtype=np.int64)
    for i, p in enumerate(d.probes):
        row = d.values[i]
        j = index[truth[p]]
        # stable ordering by (distance, gallery position)
        ranks[i] = 1 + np.count_nonzero(row < row[j]) + np.count_nonzero(row[:j] == row[j])
    return ranks


def rank_matches(d, truth):
    """Match characteristic M: fraction of probes whose true match is at rank r."""
    ranks = match_ranks(d, truth)
    counts = np.bincount(ranks - 1, minlength=len(d.gallery)).astype(np.float64)
    return counts / len(ranks)


def cmc(M):
    return np.cumsum(np.asarray(M, dtype=np.float64))


def pur(M, n=None):
    """Proportion of uncertainty removed; 1 for perfect rank-1, 0 for uniform ranks."""
    M = np.asarray(M, dtype=np.float64)
    n = len(M) if n is None else n
    if n < 2:
        return 1.0
    nz = M[M > 0]
    return float((np.log(n) + np.sum(nz * np.log(nz))) / np.log(n))


def cmc_at(curve, r):
    """CMC value at 1-based rank r; saturates at 1 beyond the gallery size."""
    return float(curve[min(r, len(curve)) - 1])


def rank_table(curve, pur_value, ranks=REPORT_RANKS):
    """Percentages in the row format of the result tables."""
    row = {f"r{r}": 100.0 * cmc_at(curve, r) for r in ranks}
    row["pur"] = 100.0 * pur_value
    return row
