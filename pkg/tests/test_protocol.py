import json

import numpy as np
import pytest

from dynfv.dataset import Dataset, Sequence
from dynfv.exceptions import ProtocolError
from dynfv.protocol import (FEATURE_NAMES, DynFvFeature, ProtocolConfig, get_feature,
                            plan_trial, run_protocol, window_ablation)
from dynfv.synth import gen_identity_population, gen_tsd_population


class Planted:
    """Feature whose vector depends on the person only, so cameras agree."""
    name = "planted"
    trainable = False

    def __init__(self, dim=8, name="planted"):
        self.dim = dim
        self.name = name

    def train(self, sequences, seed=0, threads=1):
        return None

    def encode(self, seq, codebook=None):
        rng = np.random.default_rng(int(seq.person_id[1:]) + 1)

        class V:
            values = rng.normal(size=self.dim)
        return V


def planted_dataset(n=10, pool=4):
    seqs = [Sequence(f"p{i:03d}", cam) for i in range(n) for cam in ("cam_a", "cam_b")]
    seqs += [Sequence(f"q{i:03d}", cam) for i in range(pool) for cam in ("cam_a", "cam_b")]
    roles = {f"q{i:03d}": "pool" for i in range(pool)}
    return Dataset(seqs, roles)


@pytest.mark.parametrize("mode", ["half_split", "bk"])
def test_identical_cameras_give_perfect_scores(mode):
    res = run_protocol(ProtocolConfig(mode, trials=3, seed=1), planted_dataset(), [Planted()])
    r = res["planted"]
    assert r.rank1 == 1.0
    assert abs(r.mean_pur - 1.0) < 1e-12


def test_half_split_plan():
    ds = planted_dataset(10)
    train, passes = plan_trial(ds, ProtocolConfig("half_split"), np.random.default_rng(0))
    test_ids = {s.person_id for s in passes[0].probes}
    train_ids = {s.person_id for s in train}
    assert len(test_ids) == 5 and len(train_ids) == 5
    assert not (test_ids & train_ids)
    assert all(s.camera_id == "cam_a" for s in passes[0].probes)
    assert all(s.camera_id == "cam_b" for s in passes[0].gallery)


def test_bk_plan_swaps_cameras_and_trains_on_pool():
    ds = planted_dataset(6, pool=6)
    train, passes = plan_trial(ds, ProtocolConfig("bk"), np.random.default_rng(0))
    assert {ds.role(s.person_id) for s in train} == {"pool"}
    assert len({s.person_id for s in train}) == 3
    assert len(passes) == 2
    assert passes[0].probes[0].camera_id == "cam_a" and passes[1].probes[0].camera_id == "cam_b"
    train, _ = plan_trial(ds, ProtocolConfig("bk", train_size=6), np.random.default_rng(0))
    assert len({s.person_id for s in train}) == 6
    with pytest.raises(ProtocolError):
        plan_trial(ds, ProtocolConfig("bk", train_size=7), np.random.default_rng(0))


def test_tsd_plan():
    ds = gen_tsd_population(3, 3, 4, seed=0, n_tracklets=2, n_frames=1)
    train, (p,) = plan_trial(ds, ProtocolConfig("tsd"), np.random.default_rng(0))
    assert {ds.role(s.person_id) for s in train} == {"distractor"}
    assert len(p.gallery) == 3 + 4
    assert len(p.probes) == 3 * 2
    gallery_keys = {s.key for s in p.gallery}
    for s in p.probes:
        assert p.truth[s.key] in gallery_keys and s.key not in gallery_keys


def test_tsd_requires_repeat_targets():
    ds = gen_tsd_population(2, 1, 2, seed=0, n_tracklets=2, n_frames=1)
    with pytest.raises(ProtocolError, match="t000"):
        plan_trial(ds, ProtocolConfig("tsd"), np.random.default_rng(0))


def test_config_validation():
    assert ProtocolConfig("half-split").mode == "half_split"
    with pytest.raises(ProtocolError):
        ProtocolConfig("tsd2")
    with pytest.raises(ProtocolError):
        ProtocolConfig("bk", trials=0)
    with pytest.raises(ProtocolError):
        get_feature("sift")
    assert set(FEATURE_NAMES) >= {"dynfv", "ldfv", "hist", "mean", "lbp"}


def test_too_few_identities():
    with pytest.raises(ProtocolError):
        run_protocol(ProtocolConfig("half_split"), planted_dataset(1, 0), [Planted()])
    with pytest.raises(ProtocolError):
        run_protocol(ProtocolConfig("bk"), planted_dataset(4, 0), [Planted()])


def test_run_is_deterministic_and_averages(small_population):
    cfg = ProtocolConfig("bk", trials=2, seed=4)
    a = run_protocol(cfg, small_population, ["dynfv", "hist"])
    b = run_protocol(cfg, small_population, ["dynfv", "hist"])
    assert json.dumps(a.to_json(), sort_keys=True) == json.dumps(b.to_json(), sort_keys=True)
    r = a["dynfv"]
    naive = [sum(c[j] for c in r.cmc_trials) / len(r.cmc_trials) for j in range(len(r.cmc_trials[0]))]
    np.testing.assert_allclose(r.mean_cmc, naive, atol=1e-15)
    assert "dynfv+hist" in a.features
    assert a.gallery_size == 6
    assert set(a.to_json()["features"]["dynfv"]["table"]) == {"r1", "r5", "r10", "r20", "pur"}


def test_precomputed_vectors_skip_encoding():
    ds = planted_dataset(4, 0)
    vecs = {s.key: np.full(3, float(s.person_id[1:])) for s in ds.sequences}
    res = run_protocol(ProtocolConfig("half_split", trials=2), ds, [Planted()], {"planted": vecs})
    assert res["planted"].rank1 == 1.0


def test_distance_hook_sees_every_matrix():
    seen = []
    run_protocol(ProtocolConfig("bk", trials=2), planted_dataset(4, 2),
                 [Planted(), Planted(4, "other")],
                 on_distances=lambda t, p, d: seen.append((t, p, d.feature_name)))
    # two trials x two passes x (two features + fusion)
    assert len(seen) == 2 * 2 * 3
    assert {p for _, p, _ in seen} == {0, 1}
    assert {n for _, _, n in seen} == {"planted", "other", "planted+other"}


def test_duplicate_feature_names():
    with pytest.raises(ProtocolError, match="duplicate"):
        run_protocol(ProtocolConfig("bk"), planted_dataset(4, 2), [Planted(), Planted(4)])


def test_missing_vector_is_reported():
    ds = planted_dataset(4, 0)
    with pytest.raises(ProtocolError, match="no vector"):
        run_protocol(ProtocolConfig("half_split", trials=1), ds, [Planted()], {"planted": {}})


def test_twenty_identity_gait_population_half_split():
    ds = gen_identity_population(20, noise=0.05, seed=0, appearance="black", n_tracklets=120,
                                 n_frames=1)
    res = run_protocol(ProtocolConfig("half_split", trials=10, seed=0), ds, ["dynfv"])
    assert res["dynfv"].rank1 >= 0.90


def test_window_ablation_rows(small_population):
    rows = window_ablation(ProtocolConfig("bk", trials=1), small_population,
                           subsets=((5,), (5, 9, 14)))
    assert [n for n, _ in rows] == ["a=5", "a=5,9,14"]
    for _, r in rows:
        assert 0 <= r.rank1 <= 1


def test_dynfv_feature_subset_dimension(small_population):
    f = DynFvFeature(window_lengths=(9,))
    seqs = small_population.sequences
    cb = f.train(seqs[:4])
    assert f.encode(seqs[0], cb).dim == 18 * 2 * 12 * 18
