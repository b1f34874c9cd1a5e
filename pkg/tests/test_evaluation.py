import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynfv.evaluation import (DistanceMatrix, cmc, cmc_at, euclidean_distances, match_ranks,
                              min_max_fuse, min_max_normalize, pur, rank_matches, rank_table)
from dynfv.exceptions import DimensionError, ProtocolError
from dynfv.synth import (brute_force_rank_oracle, brute_force_rank_oracle_from_distances,
                         naive_cmc, naive_distance, naive_min_max_fuse, naive_pur)


def dm(values, probes=None, gallery=None, name="f"):
    values = np.asarray(values, dtype=float)
    probes = probes or [f"p{i}" for i in range(values.shape[0])]
    gallery = gallery or [f"g{j}" for j in range(values.shape[1])]
    return DistanceMatrix(probes, gallery, values, name)


def test_distance_examples():
    d = euclidean_distances([np.ones(3)], [np.ones(3)])
    assert d.values[0, 0] == 0
    d = euclidean_distances([np.eye(2)[0]], [np.eye(2)[1]])
    assert d.values[0, 0] == pytest.approx(math.sqrt(2), abs=1e-15)


def test_distance_matches_naive(rng):
    P = {f"p{i}": rng.normal(size=12) for i in range(4)}
    G = {f"g{j}": rng.normal(size=12) for j in range(6)}
    d = euclidean_distances(P, G, "x")
    assert d.probes == list(P) and d.gallery == list(G)
    for i, p in enumerate(P.values()):
        for j, g in enumerate(G.values()):
            assert abs(d.values[i, j] - naive_distance(p, g)) < 1e-10


def test_distance_dimension_mismatch_names_feature():
    with pytest.raises(DimensionError, match="ldfv"):
        euclidean_distances([np.zeros(3)], [np.zeros(4)], "ldfv")


def test_distance_matrix_validation():
    with pytest.raises(DimensionError):
        DistanceMatrix(["a"], ["b", "c"], np.zeros((1, 3)))
    with pytest.raises(ValueError):
        DistanceMatrix(["a"], ["b"], [[np.inf]])


def test_distance_matrix_json_round_trip(tmp_path, rng):
    d = dm(rng.uniform(size=(3, 4)))
    d.save(tmp_path / "d.json")
    back = DistanceMatrix.load(tmp_path / "d.json")
    assert back.probes == d.probes and back.gallery == d.gallery
    assert back.feature_name == "f"
    np.testing.assert_array_equal(back.values, d.values)


def test_min_max_single_row():
    np.testing.assert_allclose(min_max_fuse([dm([[2, 4, 6]])]).values, [[0, 0.5, 1]])


def test_min_max_constant_matrix():
    np.testing.assert_array_equal(min_max_normalize(dm([[3, 3], [3, 3]])), 0)


def test_self_fusion_doubles_and_keeps_ranking(rng):
    d = dm(rng.uniform(size=(5, 5)), gallery=[f"p{i}" for i in range(5)])
    f = min_max_fuse([d, d])
    np.testing.assert_allclose(f.values, 2 * min_max_normalize(d), rtol=1e-15)
    truth = {p: p for p in d.probes}
    np.testing.assert_array_equal(match_ranks(f, truth), match_ranks(d, truth))
    np.testing.assert_array_equal(match_ranks(min_max_fuse([d]), truth), match_ranks(d, truth))


def test_fusion_hand_case():
    a = dm([[1, 2, 3], [4, 5, 9]])
    b = dm([[10, 0, 5], [5, 5, 10]])
    # a: min 1 max 9 ; b: min 0 max 10
    expect = [[0 / 8 + 1.0, 1 / 8 + 0.0, 2 / 8 + 0.5],
              [3 / 8 + 0.5, 4 / 8 + 0.5, 8 / 8 + 1.0]]
    np.testing.assert_allclose(min_max_fuse([a, b]).values, expect, rtol=1e-15)


def test_fusion_rejects_mismatched_ids():
    with pytest.raises(ProtocolError):
        min_max_fuse([dm([[1, 2]]), dm([[1, 2]], gallery=["x", "y"])])
    with pytest.raises(ValueError):
        min_max_fuse([])


def test_rank_examples():
    d = dm([[0, 1, 2], [3, 0, 1], [5, 4, 0]], gallery=["p0", "p1", "p2"])
    M = rank_matches(d, {p: p for p in d.probes})
    np.testing.assert_array_equal(M, [1, 0, 0])
    tied = dm([[1, 1, 1]] * 3, gallery=["p0", "p1", "p2"])
    np.testing.assert_array_equal(match_ranks(tied, {p: p for p in tied.probes}), [1, 2, 3])


def test_rank_missing_truth():
    d = dm([[0, 1]])
    with pytest.raises(ProtocolError, match="p0"):
        rank_matches(d, {"p0": "nope"})


def test_rank_matches_5x5_oracle(rng):
    for _ in range(20):
        v = rng.uniform(size=(5, 5))
        d = dm(v, gallery=[f"p{i}" for i in range(5)])
        truth = {p: p for p in d.probes}
        np.testing.assert_array_equal(
            rank_matches(d, truth),
            brute_force_rank_oracle_from_distances(v.tolist(), d.probes, d.gallery, truth))


def test_features_oracle_mirrors_vectorized(rng):
    P = {f"a{i}": rng.normal(size=6) for i in range(7)}
    G = {f"b{i}": rng.normal(size=6) for i in range(7)}
    truth = {f"a{i}": f"b{i}" for i in range(7)}
    np.testing.assert_array_equal(rank_matches(euclidean_distances(P, G), truth),
                                  brute_force_rank_oracle(P, G, truth))


def test_single_pair_oracle():
    M = brute_force_rank_oracle({"a": [1.0]}, {"b": [2.0]}, {"a": "b"})
    np.testing.assert_array_equal(M, [1.0])


def test_oracle_gallery_order_invariance(rng):
    P = {f"a{i}": rng.normal(size=4) for i in range(5)}
    G = {f"b{i}": rng.normal(size=4) for i in range(5)}
    truth = {f"a{i}": f"b{i}" for i in range(5)}
    keys = list(G)
    shuffled = {k: G[k] for k in rng.permutation(keys)}
    np.testing.assert_array_equal(brute_force_rank_oracle(P, G, truth),
                                  brute_force_rank_oracle(P, shuffled, truth))


def test_cmc_examples():
    np.testing.assert_array_equal(cmc([1, 0, 0, 0]), [1, 1, 1, 1])
    np.testing.assert_allclose(cmc(np.full(5, 0.2)), [0.2, 0.4, 0.6, 0.8, 1.0])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_cmc_prefix_sums(raw):
    M = np.array(raw)
    if M.sum() == 0:
        M[0] = 1.0
    M = M / M.sum()
    c = cmc(M)
    np.testing.assert_allclose(c, naive_cmc(M), atol=1e-12)
    assert np.all(np.diff(c) >= -1e-15)
    assert abs(c[-1] - 1) < 1e-12


def test_pur_examples():
    assert abs(pur([1, 0, 0, 0]) - 1) < 1e-12
    assert abs(pur(np.full(8, 1 / 8))) < 1e-12
    assert pur([0.5, 0.5, 0, 0], 4) == pytest.approx((math.log(4) - math.log(2)) / math.log(4))
    assert pur([0.5, 0.5, 0, 0], 4) == pytest.approx(0.5)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=20))
def test_pur_bounds_and_oracle(raw):
    M = np.array(raw)
    if M.sum() == 0:
        M[-1] = 1.0
    M = M / M.sum()
    v = pur(M)
    assert -1e-12 <= v <= 1 + 1e-12
    assert abs(v - naive_pur(M, len(M))) < 1e-12
    # base of the logarithm cancels
    m = M[M > 0]
    v2 = (math.log2(len(M)) + float(np.sum(m * np.log2(m)))) / math.log2(len(M))
    assert abs(v - v2) < 1e-12


def test_table_format():
    t = rank_table(cmc([0.5, 0.25, 0.25]), 0.3)
    assert t == {"r1": 50.0, "r5": 100.0, "r10": 100.0, "r20": 100.0, "pur": 30.0}
    assert cmc_at(np.array([0.2, 0.5]), 1) == 0.2


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 6), st.integers(2, 6))
def test_fusion_matches_naive(seed, P, G):
    rng = np.random.default_rng(seed)
    mats = [rng.uniform(size=(P, G)) * rng.uniform(0.1, 10) for _ in range(rng.integers(1, 4))]
    fused = min_max_fuse([dm(m) for m in mats])
    np.testing.assert_array_equal(fused.values, naive_min_max_fuse([m.tolist() for m in mats]))
