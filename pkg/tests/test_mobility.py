from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from manetcast.geometry import Point
from manetcast.mobility import (
    EAST,
    NORTH,
    SOUTH,
    WEST,
    MobilityConfig,
    Model,
    NodeTrace,
    TraceFormatError,
    Waypoint,
    city_section_path,
    format_trace,
    generate_city_section,
    generate_manhattan,
    generate_random_waypoint,
    generate_traces,
    manhattan_next_heading,
    manhattan_options,
    node_rng,
    position_at,
    positions_at,
    read_trace,
    write_trace,
)


def single_leg(start, end, speed, duration=100.0):
    return NodeTrace(0, (Waypoint(0.0, Point(*start), Point(*end), speed),), duration)


# --- interpolation ----------------------------------------------------------

def test_linear_interpolation_mid_leg():
    trace = single_leg((0, 0), (100, 0), 10.0)
    assert position_at(trace, 5.0) == Point(50.0, 0.0)


def test_position_at_leg_endpoints_and_midpoint():
    trace = NodeTrace(0, (
        Waypoint(0.0, Point(0, 0), Point(200, 0), 20.0),
        Waypoint(10.0, Point(200, 0), Point(200, 300), 30.0),
    ), 20.0)
    assert position_at(trace, 0.0) == Point(0, 0)
    assert position_at(trace, 5.0) == Point(100, 0)
    assert position_at(trace, 10.0) == Point(200, 0)
    assert position_at(trace, 20.0) == Point(200, 300)


def test_position_holds_during_pause():
    trace = NodeTrace(0, (
        Waypoint(0.0, Point(0, 0), Point(10, 0), 1.0),
        Waypoint(10.0, Point(10, 0), Point(10, 0), 0.0),
        Waypoint(15.0, Point(10, 0), Point(20, 0), 1.0),
    ), 25.0)
    assert position_at(trace, 12.5) == Point(10, 0)
    assert position_at(trace, 20.0) == Point(15, 0)


@pytest.mark.parametrize("t", [-0.1, 100.1])
def test_position_at_rejects_out_of_range(t):
    with pytest.raises(ValueError):
        position_at(single_leg((0, 0), (1, 0), 1.0), t)


# --- config -----------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [
    dict(v_min=10, v_max=5),
    dict(v_max=0),
    dict(duration=0),
    dict(pause_time=-1),
    dict(model=Model.MANHATTAN, block_length=300),
    dict(model=Model.CITY_SECTION, width=950),
])
def test_config_validation(kwargs):
    base = dict(model=Model.RANDOM_WAYPOINT)
    base.update(kwargs)
    with pytest.raises(ValueError):
        MobilityConfig(**base)


# --- random waypoint --------------------------------------------------------

def test_rwp_degenerate_speed_interval():
    cfg = MobilityConfig(Model.RANDOM_WAYPOINT, v_min=5, v_max=5, duration=2000, node_count=3)
    for trace in generate_traces(cfg):
        assert {w.speed for w in trace.waypoints} == {5.0}


def test_rwp_targets_uniform_chi_square():
    cfg = MobilityConfig(Model.RANDOM_WAYPOINT, v_max=50, duration=1000, node_count=1, seed=3)
    targets = []
    node = 0
    while len(targets) < 10_000:
        targets += [w.end for w in generate_random_waypoint(cfg, node).waypoints]
        node += 1
    pts = np.array(targets[:10_000])
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=10, range=[[0, 1000], [0, 1000]])
    assert stats.chisquare(counts.ravel()).pvalue >= 0.001


def test_rwp_pause_is_zero_length_leg():
    cfg = MobilityConfig(Model.RANDOM_WAYPOINT, pause_time=3.0, duration=300, node_count=1, seed=1)
    wps = generate_random_waypoint(cfg, 0).waypoints
    pauses = [w for w in wps if w.speed == 0]
    assert pauses and all(w.start == w.end for w in pauses)
    for a, b in zip(wps, wps[1:]):
        if a.speed == 0:
            assert b.depart_time == pytest.approx(a.depart_time + 3.0, abs=1e-6)


def test_legs_are_time_contiguous():
    for model in Model:
        cfg = MobilityConfig(model, v_max=25, duration=500, node_count=5, seed=9)
        for trace in generate_traces(cfg):
            wps = trace.waypoints
            assert wps[0].depart_time == 0.0
            for a, b in zip(wps, wps[1:]):
                assert a.end == b.start
                assert b.depart_time >= a.depart_time
                if a.speed > 0:
                    # arrival rounded up to the 6-decimal grid
                    assert 0 <= b.depart_time - (a.depart_time + a.length / a.speed) <= 1.0000001e-6
            assert trace.leg_end_time(len(wps) - 1) >= cfg.duration


# --- city section -------------------------------------------------------------

def grid_bfs_distance(src, dst, shape):
    nx, ny = shape
    dist = {src: 0}
    queue = deque([src])
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            p = (x + dx, y + dy)
            if 0 <= p[0] <= nx and 0 <= p[1] <= ny and p not in dist:
                dist[p] = dist[(x, y)] + 1
                queue.append(p)
    return dist[dst]


def test_city_section_travel_time_is_manhattan_distance_over_speed():
    corners = city_section_path((0, 0), (3, 4))
    assert corners == [(0, 0), (0, 4), (3, 4)]
    length = sum(100 * (abs(a[0] - b[0]) + abs(a[1] - b[1])) for a, b in zip(corners, corners[1:]))
    assert length == 700
    v = 7.0
    trace = NodeTrace(0, tuple(
        Waypoint(t, Point(a[0] * 100.0, a[1] * 100.0), Point(b[0] * 100.0, b[1] * 100.0), v)
        for t, (a, b) in zip((0.0, 400 / v), zip(corners, corners[1:]))
    ), 700 / v)
    assert position_at(trace, 700 / v) == Point(300, 400)


def test_city_section_tie_break_prefers_larger_axis_then_horizontal():
    assert city_section_path((0, 0), (5, 2)) == [(0, 0), (5, 0), (5, 2)]
    assert city_section_path((4, 4), (1, 1)) == [(4, 4), (1, 4), (1, 1)]
    assert city_section_path((2, 2), (2, 2)) == [(2, 2)]
    assert city_section_path((2, 2), (2, 7)) == [(2, 2), (2, 7)]


def test_city_section_paths_are_grid_shortest(rng):
    shape = (10, 10)
    for _ in range(1000):
        src = tuple(int(v) for v in rng.integers(0, 11, size=2))
        dst = tuple(int(v) for v in rng.integers(0, 11, size=2))
        corners = city_section_path(src, dst)
        for a, b in zip(corners, corners[1:]):
            assert a[0] == b[0] or a[1] == b[1]
        hops = sum(abs(a[0] - b[0]) + abs(a[1] - b[1]) for a, b in zip(corners, corners[1:]))
        assert hops == grid_bfs_distance(src, dst, shape)


def test_city_section_never_emits_zero_length_legs():
    cfg = MobilityConfig(Model.CITY_SECTION, width=200, height=200, v_max=25, duration=2000,
                         node_count=5, seed=4)
    for trace in generate_traces(cfg):
        assert all(w.length > 0 for w in trace.waypoints)


def test_city_section_starts_at_intersection_and_stays_on_streets():
    cfg = MobilityConfig(Model.CITY_SECTION, v_max=25, duration=1000, node_count=10, seed=2)
    for trace in generate_traces(cfg):
        for w in trace.waypoints:
            for p in (w.start, w.end):
                assert p.x % 100 == 0 and p.y % 100 == 0
            assert w.start.x == w.end.x or w.start.y == w.end.y


# --- manhattan ----------------------------------------------------------------

def test_manhattan_corner_has_single_forced_option():
    # westbound along the top edge into the north-west corner
    shape = (10, 10)
    assert manhattan_options((0, 10), WEST, shape) == [SOUTH]
    rng = node_rng(0, 0)
    assert {manhattan_next_heading(rng, (0, 10), WEST, shape) for _ in range(500)} == {SOUTH}


def test_manhattan_mid_grid_frequencies():
    rng = node_rng(42, 0)
    n = 100_000
    picks = np.array([manhattan_next_heading(rng, (5, 5), EAST, (10, 10)) for _ in range(n)])
    assert abs((picks == EAST).mean() - 0.50) <= 0.01
    assert abs((picks == NORTH).mean() - 0.25) <= 0.01
    assert abs((picks == SOUTH).mean() - 0.25) <= 0.01
    assert not (picks == WEST).any()


def test_manhattan_two_options_split_evenly():
    rng = node_rng(1, 0)
    # eastbound reaching the east edge: only north or south remain
    assert sorted(manhattan_options((10, 5), EAST, (10, 10))) == [NORTH, SOUTH]
    picks = np.array([manhattan_next_heading(rng, (10, 5), EAST, (10, 10)) for _ in range(20_000)])
    assert abs((picks == NORTH).mean() - 0.5) <= 0.02


@pytest.mark.parametrize("position, expected", [((5, 5), 4), ((0, 5), 3), ((0, 0), 2)])
def test_manhattan_first_move_uniform_over_feasible(position, expected):
    rng = node_rng(7, 0)
    options = manhattan_options(position, None, (10, 10))
    assert len(options) == expected
    picks = np.array([manhattan_next_heading(rng, position, None, (10, 10)) for _ in range(20_000)])
    for h in options:
        assert abs((picks == h).mean() - 1 / expected) <= 0.02


def test_manhattan_fixed_speed_block_time():
    cfg = MobilityConfig(Model.MANHATTAN, v_min=5, v_max=5, duration=500, node_count=3, seed=5)
    for trace in generate_traces(cfg):
        wps = trace.waypoints
        for a, b in zip(wps, wps[1:]):
            assert a.length == 100.0
            assert b.depart_time - a.depart_time == pytest.approx(20.0, abs=1e-9)


def test_manhattan_segments_span_one_block_without_u_turns():
    cfg = MobilityConfig(Model.MANHATTAN, v_max=50, duration=1000, node_count=10, seed=8)
    for trace in generate_traces(cfg):
        wps = trace.waypoints
        for w in wps:
            assert w.length == 100.0
            assert w.start.x == w.end.x or w.start.y == w.end.y
        for a, b in zip(wps, wps[1:]):
            assert b.end != a.start


# --- properties shared by all models -------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.sampled_from(list(Model)), st.integers(0, 2**32), st.sampled_from([5.0, 25.0, 50.0]))
def test_containment_and_speed_bound(model, seed, v_max):
    cfg = MobilityConfig(model, v_max=v_max, duration=300, node_count=4, seed=seed)
    traces = generate_traces(cfg)
    times = np.linspace(0, 300, 1201)
    pos = positions_at(traces, times)
    assert (pos >= 0).all() and (pos[..., 0] <= 1000).all() and (pos[..., 1] <= 1000).all()
    step = np.hypot(*np.moveaxis(np.diff(pos, axis=0), -1, 0))
    assert (step <= v_max * 0.25 * (1 + 1e-9)).all()
    if model.is_grid:
        on_street = (pos[..., 0] % 100 == 0) | (pos[..., 1] % 100 == 0)
        assert on_street.all()


def test_vectorized_and_scalar_sampling_agree(rng):
    cfg = MobilityConfig(Model.RANDOM_WAYPOINT, duration=200, node_count=5, seed=11)
    traces = generate_traces(cfg)
    times = np.sort(rng.uniform(0, 200, 50))
    pos = positions_at(traces, times)
    for k, t in enumerate(times):
        for j, tr in enumerate(traces):
            assert tuple(pos[k, j]) == tuple(position_at(tr, float(t)))


@pytest.mark.parametrize("model", list(Model))
def test_determinism_and_node_independence(model):
    cfg = MobilityConfig(model, duration=300, node_count=6, seed=99)
    assert format_trace(cfg, generate_traces(cfg)) == format_trace(cfg, generate_traces(cfg))
    bigger = MobilityConfig(model, duration=300, node_count=9, seed=99)
    assert generate_traces(bigger)[:6] == generate_traces(cfg)
    other_seed = MobilityConfig(model, duration=300, node_count=6, seed=100)
    assert generate_traces(other_seed) != generate_traces(cfg)


def test_generator_rejects_wrong_model():
    with pytest.raises(ValueError):
        generate_manhattan(MobilityConfig(Model.CITY_SECTION), 0)
    with pytest.raises(ValueError):
        generate_city_section(MobilityConfig(Model.RANDOM_WAYPOINT), 0)


# --- trace files ----------------------------------------------------------------

def test_empty_trace_file_is_header_only(tmp_path):
    cfg = MobilityConfig(Model.RANDOM_WAYPOINT, node_count=0)
    path = write_trace([], tmp_path / "empty.trace", cfg)
    lines = path.read_text().splitlines()
    assert lines[0] == "#manet-trace v1"
    assert all(line.startswith("#") for line in lines)
    assert read_trace(path) == (cfg, [])


def test_single_waypoint_round_trip(tmp_path):
    cfg = MobilityConfig(Model.RANDOM_WAYPOINT, node_count=1, duration=10)
    trace = NodeTrace(0, (Waypoint(0.0, Point(1.5, 2.25), Point(100.125, 3.0), 12.5),), 10.0)
    path = write_trace([trace], tmp_path / "one.trace", cfg)
    data = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert data == ["0 0.000000 1.500000 2.250000 100.125000 3.000000 12.500000"]
    assert read_trace(path, expect=cfg) == (cfg, [trace])


@pytest.mark.parametrize("model", list(Model))
def test_hundred_node_round_trip_is_exact(tmp_path, model):
    cfg = MobilityConfig(model, node_count=100, duration=200, seed=17, v_max=50)
    traces = generate_traces(cfg)
    path = write_trace(traces, tmp_path / "t.trace", cfg)
    cfg2, traces2 = read_trace(path, expect=cfg)
    assert cfg2 == cfg
    assert traces2 == traces
    assert format_trace(cfg2, traces2) == path.read_text()


def test_malformed_line_reports_line_number(tmp_path):
    cfg = MobilityConfig(Model.RANDOM_WAYPOINT, node_count=2, duration=500)
    path = write_trace(generate_traces(cfg), tmp_path / "bad.trace", cfg)
    lines = path.read_text().splitlines()
    lines.insert(13, "0 1.0 2.0 oops")
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceFormatError, match=":14:"):
        read_trace(path)


def test_header_mismatch_and_bad_magic(tmp_path):
    cfg = MobilityConfig(Model.MANHATTAN, node_count=2, duration=10)
    path = write_trace(generate_traces(cfg), tmp_path / "m.trace", cfg)
    with pytest.raises(TraceFormatError, match="does not match"):
        read_trace(path, expect=MobilityConfig(Model.MANHATTAN, node_count=2, duration=10, seed=1))
    path.write_text("garbage\n")
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_node_id_out_of_range_rejected(tmp_path):
    cfg = MobilityConfig(Model.RANDOM_WAYPOINT, node_count=1, duration=10)
    text = format_trace(cfg, []) + "3 0.000000 0.000000 0.000000 1.000000 1.000000 1.000000\n"
    path = tmp_path / "x.trace"
    path.write_text(text)
    with pytest.raises(TraceFormatError, match="node id 3"):
        read_trace(path)
