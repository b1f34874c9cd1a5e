"""Trial protocols (half split, appearance-impaired pool, distractor gallery).

A feature is anything with ``name``, ``trainable``, ``train(sequences, seed,
threads)`` and ``encode(sequence, codebook)``. Codebooks are always fitted on
the trial's training sequences only.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import spatial
from .evaluation import cmc, euclidean_distances, min_max_fuse, pur, rank_matches, rank_table
from .exceptions import ProtocolError
from .fisher import DYNFV_COMPONENTS, encode_dynfv, train_dynfv_codebook
from .trajectory import DYNFV_GRID, PyramidConfig

log = logging.getLogger(__name__)

MODES = ("half_split", "bk", "tsd")


@dataclass
class DynFvFeature:
    window_lengths: tuple = (5, 9, 14)
    k: int = DYNFV_COMPONENTS
    name: str = "dynfv"
    trainable = True

    def train(self, sequences, seed=0, threads=1):
        sequences = list(sequences)
        return train_dynfv_codebook([s.tracklets for s in sequences], DYNFV_GRID,
                                    PyramidConfig(self.window_lengths), self.k, seed,
                                    masks=[s.mask for s in sequences], threads=threads)

    def encode(self, seq, codebook):
        return encode_dynfv(seq.tracklets, codebook, seq.mask)


@dataclass
class LdfvFeature:
    k: int = spatial.LDFV_COMPONENTS
    name: str = "ldfv"
    trainable = True

    def train(self, sequences, seed=0, threads=1):
        return spatial.train_ldfv_codebook(sequences, spatial.LDFV_LAYOUT, self.k, seed,
                                           threads=threads)

    def encode(self, seq, codebook):
        return spatial.encode_ldfv(seq, codebook)


@dataclass
class SpatialFeature:
    name: str
    fn: object
    trainable = False

    def train(self, sequences, seed=0, threads=1):
        return None

    def encode(self, seq, codebook=None):
        return self.fn(seq)


def _registry():
    return {
        "dynfv": DynFvFeature(),
        "ldfv": LdfvFeature(),
        "hist": SpatialFeature("hist", spatial.hist_feature),
        "mean": SpatialFeature("mean", spatial.mean_color_feature),
        "lbp": SpatialFeature("lbp", spatial.lbp_feature),
        "colorlbp": SpatialFeature("colorlbp", spatial.color_lbp_feature),
        "histlbp": SpatialFeature("histlbp", spatial.hist_lbp_feature),
    }


FEATURE_NAMES = tuple(_registry())


def get_feature(spec):
    if not isinstance(spec, str):
        return spec
    try:
        return _registry()[spec]
    except KeyError:
        raise ProtocolError(f"unknown feature {spec!r}; choose from {FEATURE_NAMES}") from None


@dataclass
class ProtocolConfig:
    mode: str = "half_split"
    trials: int = 10
    seed: int = 0
    probe_camera: str | None = None
    gallery_camera: str | None = None
    train_size: int | None = None   # bk: identities drawn from the pool
    fuse: bool = True

    def __post_init__(self):
        self.mode = self.mode.replace("-", "_")
        if self.mode not in MODES:
            raise ProtocolError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.trials < 1:
            raise ProtocolError("trials must be >= 1")


@dataclass
class FeatureResult:
    name: str
    cmc_trials: list = field(default_factory=list)
    pur_trials: list = field(default_factory=list)

    @property
    def mean_cmc(self):
        return np.mean(np.asarray(self.cmc_trials), axis=0)

    @property
    def mean_pur(self):
        return float(np.mean(self.pur_trials))

    @property
    def rank1(self):
        return float(self.mean_cmc[0])

    def table(self):
        return rank_table(self.mean_cmc, self.mean_pur)

    def to_json(self):
        return {
            "mean_cmc": [float(v) for v in self.mean_cmc],
            "mean_pur": self.mean_pur,
            "table": self.table(),
            "per_trial": [{"cmc": [float(v) for v in c], "pur": float(p)}
                          for c, p in zip(self.cmc_trials, self.pur_trials)],
        }


@dataclass
class TrialResult:
    config: ProtocolConfig
    gallery_size: int
    features: dict   # name -> FeatureResult

    def __getitem__(self, name):
        return self.features[name]

    def to_json(self):
        return {"config": asdict(self.config), "gallery_size": self.gallery_size,
                "features": {n: r.to_json() for n, r in self.features.items()}}


@dataclass
class _Pass:
    probes: list
    gallery: list
    truth: dict


def _cameras(ds, cfg):
    cams = ds.cameras
    probe = cfg.probe_camera or cams[0]
    gallery = cfg.gallery_camera or (cams[1] if len(cams) > 1 else None)
    if gallery is None or probe == gallery:
        raise ProtocolError(f"need distinct probe and gallery cameras, have {cams}")
    return probe, gallery


def _paired(ds, persons, probe, gallery):
    have = {(s.person_id, s.camera_id) for s in ds.sequences}
    return [p for p in persons if (p, probe) in have and (p, gallery) in have]


def _cross_camera_pass(ds, persons, probe, gallery):
    probes = [ds.get(p, probe) for p in persons]
    gal = [ds.get(p, gallery) for p in persons]
    return _Pass(probes, gal, {s.key: f"{s.person_id}@{gallery}" for s in probes})


def plan_trial(ds, cfg, rng):
    """Training sequences and evaluation passes for one trial."""
    if cfg.mode == "half_split":
        probe, gallery = _cameras(ds, cfg)
        persons = _paired(ds, ds.persons("main"), probe, gallery)
        if len(persons) < 2:
            raise ProtocolError(f"half split needs >= 2 identities in both cameras, have {len(persons)}")
        order = [persons[i] for i in rng.permutation(len(persons))]
        n_train = len(persons) // 2
        train = sorted(order[:n_train])
        test = sorted(order[n_train:])
        train_seqs = [s for p in train for s in ds.of_person(p)]
        return train_seqs, [_cross_camera_pass(ds, test, probe, gallery)]

    if cfg.mode == "bk":
        probe, gallery = _cameras(ds, cfg)
        test = _paired(ds, ds.persons("main"), probe, gallery)
        pool = ds.persons("pool")
        if not test or not pool:
            raise ProtocolError("bk mode needs 'main' identities and a training 'pool'")
        size = cfg.train_size or max(1, len(pool) // 2)
        if size > len(pool):
            raise ProtocolError(f"train_size {size} exceeds pool of {len(pool)}")
        train = sorted(pool[i] for i in rng.permutation(len(pool))[:size])
        train_seqs = [s for p in train for s in ds.of_person(p)]
        return train_seqs, [_cross_camera_pass(ds, test, probe, gallery),
                            _cross_camera_pass(ds, test, gallery, probe)]

    targets, distractors = ds.persons("target"), ds.persons("distractor")
    if not targets:
        raise ProtocolError("tsd mode needs 'target' identities")
    short = [t for t in targets if len(ds.of_person(t)) < 2]
    if short:
        raise ProtocolError(f"targets without >= 2 sequences: {short}")
    train_seqs = [s for d in distractors for s in ds.of_person(d)]
    if not train_seqs:
        raise ProtocolError("tsd mode needs distractor sequences to train codebooks")
    gallery, probes, truth = [], [], {}
    for t in targets:
        seqs = ds.of_person(t)
        pick = int(rng.integers(len(seqs)))
        gallery.append(seqs[pick])
        for j, s in enumerate(seqs):
            if j != pick:
                probes.append(s)
                truth[s.key] = seqs[pick].key
    gallery.extend(train_seqs)
    return train_seqs, [_Pass(probes, gallery, truth)]


def _encode_all(feature, seqs, codebook, threads):
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return dict(zip([s.key for s in seqs],
                        pool.map(lambda s: feature.encode(s, codebook).values, seqs)))


def run_protocol(cfg, dataset, features=("dynfv",), precomputed=None, threads=1,
                 on_distances=None):
    """Run ``cfg.trials`` trials and average CMC/PUR per feature and fusion.

    ``precomputed`` optionally maps feature name -> {sequence key: vector};
    such features skip training and encoding. Trial ``t`` draws all of its
    randomness from ``seed + t``. ``on_distances(trial, pass_index, matrix)``
    is called for every per-feature and fused distance matrix.
    """
    feats = [get_feature(f) for f in features]
    names = [f.name for f in feats]
    if len(set(names)) != len(names):
        raise ProtocolError(f"duplicate feature names in {names}")
    results = {n: FeatureResult(n) for n in names}
    fused_name = "+".join(names)
    if cfg.fuse and len(feats) > 1:
        results[fused_name] = FeatureResult(fused_name)
    precomputed = precomputed or {}
    static_cache = {n: {} for n in names}
    gallery_size = None

    for t in range(cfg.trials):
        trial_seed = cfg.seed + t
        rng = np.random.default_rng(trial_seed)
        train_seqs, passes = plan_trial(dataset, cfg, rng)
        needed = {s.key: s for p in passes for s in p.probes + p.gallery}
        vectors = {}
        for f in feats:
            if f.name in precomputed:
                vectors[f.name] = precomputed[f.name]
                continue
            if f.trainable:
                cb = f.train(train_seqs, seed=trial_seed, threads=threads)
                vectors[f.name] = _encode_all(f, list(needed.values()), cb, threads)
            else:
                cache = static_cache[f.name]
                todo = [s for k, s in needed.items() if k not in cache]
                cache.update(_encode_all(f, todo, None, threads))
                vectors[f.name] = cache

        per_pass = {n: [] for n in results}
        for pi, p in enumerate(passes):
            gids = [s.key for s in p.gallery]
            dists = []
            for n in names:
                try:
                    probe_vecs = {s.key: vectors[n][s.key] for s in p.probes}
                    gal_vecs = {k: vectors[n][k] for k in gids}
                except KeyError as exc:
                    raise ProtocolError(f"feature {n!r} has no vector for sequence {exc}") from None
                d = euclidean_distances(probe_vecs, gal_vecs, n)
                dists.append(d)
                per_pass[n].append(rank_matches(d, p.truth))
            if fused_name in results:
                dists.append(min_max_fuse(dists, fused_name))
                per_pass[fused_name].append(rank_matches(dists[-1], p.truth))
            if on_distances is not None:
                for d in dists:
                    on_distances(t, pi, d)
            if gallery_size not in (None, len(gids)):
                raise ProtocolError("gallery size changed between trials")
            gallery_size = len(gids)

        for n, Ms in per_pass.items():
            results[n].cmc_trials.append(cmc(np.mean(Ms, axis=0)))
            results[n].pur_trials.append(float(np.mean([pur(M) for M in Ms])))
        log.info("trial %d/%d rank-1: %s", t + 1, cfg.trials,
                 {n: round(float(r.cmc_trials[-1][0]), 3) for n, r in results.items()})
    return TrialResult(cfg, gallery_size, results)


def window_ablation(cfg, dataset, subsets=((5,), (9,), (14,), (5, 9, 14)), threads=1):
    """DynFV protocol per pyramid subset; rows mirror the window-length table."""
    rows = []
    for subset in subsets:
        name = "a=" + ",".join(str(a) for a in subset)
        feat = DynFvFeature(window_lengths=tuple(subset), name=name)
        res = run_protocol(cfg, dataset, [feat], threads=threads)[name]
        rows.append((name, res))
    return rows
