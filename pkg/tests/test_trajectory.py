import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dynfv.exceptions import DimensionError, InvalidTrackletError, ParseError
from dynfv.synth import gen_lti_tracklet
from dynfv.trajectory import (DYNFV_GRID, GridSpec, PyramidConfig, Tracklet, assign_grids,
                              build_hankel, group_by_sequence, new_diagnostics,
                              parse_trajectory_file, pyramid_windows, to_velocities,
                              window_matrix, write_trajectory_file)


def write(tmp_path, text):
    p = tmp_path / "t.trk"
    p.write_text(text)
    return p


def test_parse_single_record(tmp_path):
    recs = parse_trajectory_file(write(tmp_path, "seq01 12 0.0 0.0 1.0 2.0 3.0 5.0\n"))
    assert len(recs) == 1
    sid, t = recs[0]
    assert sid == "seq01" and t.start_frame == 12
    np.testing.assert_array_equal(t.points, [[0, 0], [1, 2], [3, 5]])


def test_parse_empty_and_comments(tmp_path):
    assert parse_trajectory_file(write(tmp_path, "")) == []
    recs = parse_trajectory_file(write(tmp_path, "# header\n\n a 0 1 1 2 2\n# x\n"))
    assert [s for s, _ in recs] == ["a"]


def test_parse_fifteen_points(tmp_path):
    pts = " ".join(f"{i}.0 {2 * i}.5" for i in range(15))
    (_, t), = parse_trajectory_file(write(tmp_path, f"s 3 {pts}\n"))
    assert len(t) == 15
    assert len(to_velocities(t)) == 14


def test_parse_preserves_order(tmp_path):
    recs = parse_trajectory_file(write(tmp_path, "b 0 0 0 1 1\na 1 0 0 1 1\nb 2 0 0 2 2\n"))
    assert [(s, t.start_frame) for s, t in recs] == [("b", 0), ("a", 1), ("b", 2)]
    assert list(group_by_sequence(recs)) == ["b", "a"]


@pytest.mark.parametrize("line, lineno", [
    ("ok 0 0 0 1 1\nbad 0 0 0 1\n", 2),          # odd coordinate count
    ("x 0 0 0 1 one\n", 1),                      # non-numeric
    ("# c\nshort 0 1 2\n", 2),                   # fewer than two points
    ("s 1.5 0 0 1 1\n", 1),                      # fractional start frame
])
def test_parse_errors_carry_line_number(tmp_path, line, lineno):
    with pytest.raises(ParseError) as info:
        parse_trajectory_file(write(tmp_path, line))
    assert info.value.line == lineno
    assert f"line {lineno}" in str(info.value)


def test_parse_rejects_non_finite_with_count(tmp_path):
    text = "a 0 0 0 1 1\nb 0 0 nan 1 1\nc 0 inf 0 1 1\nd 0 2 2 3 3\n"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        recs = parse_trajectory_file(write(tmp_path, text))
    assert [s for s, _ in recs] == ["a", "d"]
    assert len(caught) == 1 and "2" in str(caught[0].message)


def test_write_read_round_trip(tmp_path, rng):
    recs = [(f"s{i % 3}", Tracklet(i, rng.uniform(0, 60, size=(15, 2)))) for i in range(7)]
    p = tmp_path / "r.trk"
    write_trajectory_file(p, recs)
    back = parse_trajectory_file(p)
    assert [s for s, _ in back] == [s for s, _ in recs]
    for (_, a), (_, b) in zip(recs, back):
        assert a.start_frame == b.start_frame
        np.testing.assert_array_equal(a.points, b.points)


def test_invalid_tracklets():
    with pytest.raises(InvalidTrackletError):
        Tracklet(0, [[1.0, 2.0]])
    with pytest.raises(InvalidTrackletError):
        Tracklet(0, [[1.0, 2.0], [np.nan, 1.0]])


def test_velocities():
    v = to_velocities(Tracklet(0, [(0, 0), (1, 2), (3, 5)]))
    np.testing.assert_array_equal(v.deltas, [[1, 2], [2, 3]])
    v = to_velocities(Tracklet(0, [(5, 5)] * 4))
    np.testing.assert_array_equal(v.deltas, np.zeros((3, 2)))


@given(st.lists(st.tuples(st.floats(0, 64), st.floats(0, 128)), min_size=2, max_size=30))
def test_velocity_round_trip(points):
    t = Tracklet(0, points)
    v = to_velocities(t)
    assert len(v) == len(t) - 1
    np.testing.assert_array_equal(v.deltas, np.diff(t.points, axis=0))
    rebuilt = t.points[0] + np.concatenate([np.zeros((1, 2)), np.cumsum(v.deltas, axis=0)])
    np.testing.assert_allclose(rebuilt, t.points, atol=1e-9)


def test_hankel_scalar_example():
    h = build_hankel(np.array([1, 2, 3, 4, 5.0]), 3)
    np.testing.assert_array_equal(h.entries, [[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    assert h.rows + h.cols - 1 == 5


def test_hankel_degenerate_single_column():
    h = build_hankel(np.array([[1.0, 2.0], [3.0, 4.0]]), 2)
    assert h.cols == 1
    np.testing.assert_array_equal(h.entries, [[1], [2], [3], [4]])


def test_hankel_too_many_rows():
    with pytest.raises(DimensionError):
        build_hankel(np.arange(4.0), 5)


@settings(max_examples=40)
@given(st.integers(2, 20), st.data())
def test_hankel_block_anti_diagonals(n, data):
    rows = data.draw(st.integers(1, n))
    v = np.random.default_rng(n).normal(size=(n, 2))
    h = build_hankel(v, rows)
    assert h.is_block_hankel()
    for (i, j), (i2, j2) in itertools.product(itertools.product(range(h.rows), range(h.cols)),
                                              repeat=2):
        if i + j == i2 + j2:
            np.testing.assert_array_equal(h.block(i, j), h.block(i2, j2))


def test_hankel_rank_of_second_order_recurrence():
    # x_{t+1} = 2 x_t - x_{t-1}: double pole at 1 (constant acceleration)
    v = np.zeros((14, 2))
    v[:2] = [[0.3, -0.2], [0.7, 0.1]]
    for t in range(2, 14):
        v[t] = 2 * v[t - 1] - v[t - 2]
    s = np.linalg.svd(build_hankel(v, 4).entries, compute_uv=False)
    assert s[2] / s[0] < 1e-6


def test_lti_rank_property_higher_order(rng):
    for order in (1, 2, 3, 4):
        poles = []
        while len(poles) < order:
            if order - len(poles) >= 2 and rng.random() < 0.5:
                r, th = rng.uniform(0.8, 1.0), rng.uniform(0.1, 3.0)
                poles += [r * np.exp(1j * th), r * np.exp(-1j * th)]
            else:
                poles.append(rng.uniform(-0.95, 0.95))
        t = gen_lti_tracklet(order, poles, seed=order)
        h = build_hankel(to_velocities(t), order + 2)
        s = np.linalg.svd(h.entries, compute_uv=False)
        assert s[order] / s[0] < 1e-6


def brute_windows(v, a):
    return [v.deltas[j:j + a] for j in range(len(v) - a + 1)]


def test_pyramid_window_counts():
    v = to_velocities(Tracklet(0, np.cumsum(np.ones((15, 2)), axis=0)))
    assert len(pyramid_windows(v, 5)) == 10
    assert len(pyramid_windows(v, 9)) == 6
    assert len(pyramid_windows(v, 14)) == 1
    np.testing.assert_array_equal(pyramid_windows(v, 14)[0].deltas, v.deltas)


@given(st.integers(1, 25), st.integers(1, 25))
def test_pyramid_windows_match_enumeration(l, a):
    deltas = np.random.default_rng(l * 31 + a).normal(size=(l, 2))
    v = to_velocities(Tracklet(0, np.vstack([np.zeros(2), np.cumsum(deltas, axis=0)])))
    diag = new_diagnostics()
    wins = pyramid_windows(v, a, diag)
    if a > l:
        assert wins == [] and diag["window_too_long"] == 1
        return
    expect = brute_windows(v, a)
    assert len(wins) == l - a + 1 == len(expect)
    for w, e in zip(wins, expect):
        np.testing.assert_array_equal(w.deltas, e)
    flat = window_matrix(v, a)
    np.testing.assert_array_equal(flat, np.stack([e.reshape(-1) for e in expect]))


def test_window_flattening_is_interleaved():
    v = to_velocities(Tracklet(0, [(0, 0), (1, 10), (3, 30), (6, 60)]))
    np.testing.assert_array_equal(window_matrix(v, 2), [[1, 10, 2, 20], [2, 20, 3, 30]])


def test_default_grid_layout():
    g = DYNFV_GRID
    assert g.x_origins == (0, 16, 32)
    assert g.y_origins == (0, 18, 36, 54, 72, 90)
    assert g.count == 18 and g.shape == (6, 3)
    for x0, y0 in g.cell_origins:
        assert x0 + 32 <= 64 and y0 + 36 <= 128


def test_ldfv_and_colorlbp_layout_counts():
    assert GridSpec(cell_size=(21, 16)).shape == (15, 5)
    assert GridSpec(cell_size=(21, 16)).count == 75
    assert GridSpec(cell_size=(16, 8)).count == 217


def closed_form_count(crop, cell, overlap=0.5):
    return int((crop - cell) // (cell * (1 - overlap))) + 1


@pytest.mark.parametrize("cell", [(32, 36), (21, 16), (16, 8), (64, 128), (20, 20)])
def test_grid_count_closed_form(cell):
    g = GridSpec(cell_size=cell)
    assert g.count == closed_form_count(64, cell[0]) * closed_form_count(128, cell[1])


def brute_cells(g, x, y):
    w, h = g.cell_size
    xs, ys = g.x_origins, g.y_origins
    out = []
    for idx, (x0, y0) in enumerate(g.cell_origins):
        col, row = xs.index(x0), ys.index(y0)
        in_x = x0 <= x < x0 + w or (col == len(xs) - 1 and x == x0 + w)
        in_y = y0 <= y < y0 + h or (row == len(ys) - 1 and y == y0 + h)
        if in_x and in_y:
            out.append(idx)
    return out


def test_assign_grids_examples():
    t = Tracklet(0, [(0, 0), (1, 1)])
    assert assign_grids(t) == [0]
    t = Tracklet(0, [(20, 50), (21, 51)])
    assert assign_grids(t) == brute_cells(DYNFV_GRID, 20, 50)
    assert len(assign_grids(t)) == 4
    mask = np.ones((128, 64), dtype=bool)
    mask[50, 20] = False
    assert assign_grids(t, mask=mask) == []


@given(st.floats(0, 64), st.floats(0, 128))
def test_assign_grids_matches_brute_force(x, y):
    t = Tracklet(0, [(x, y), (x, y)])
    assert assign_grids(t) == brute_cells(DYNFV_GRID, x, y)
    # the 6 cell rows end at 90 + 36 = 126, two pixels short of the crop
    assert bool(assign_grids(t)) == (y <= 126)


def test_uncovered_bottom_rows_are_counted():
    diag = new_diagnostics()
    assert assign_grids(Tracklet(0, [(10, 127), (10, 127)]), diagnostics=diag) == []
    assert diag["start_uncovered"] == 1


def test_assign_grids_outside_crop():
    diag = new_diagnostics()
    assert assign_grids(Tracklet(0, [(70, 10), (71, 10)]), diagnostics=diag) == []
    assert diag["start_outside_crop"] == 1


def test_pyramid_config():
    assert PyramidConfig().window_lengths == (5, 9, 14)
    assert PyramidConfig((14, 5, 5)).window_lengths == (5, 14)
    assert PyramidConfig().stride == 1
    with pytest.raises(ValueError):
        PyramidConfig(())
