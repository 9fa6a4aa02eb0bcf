"""Mobility traces for Random Waypoint, City Section and Manhattan models.

A trace is a list of piecewise-linear legs (waypoints). Each leg departs at
``depart_time`` and ends when the next leg departs; the last leg ends at its
own arrival time, which is at or after the simulated duration.

All generated times, coordinates and speeds are quantized to 6 decimal places
so that a trace written to disk reads back bit-identical. Arrival times are
rounded *up* so a leg never moves faster than its recorded speed.

Random streams: node ``i`` of a trace with seed ``s`` draws from
``numpy.random.Generator(PCG64(SeedSequence(s, spawn_key=(i,))))``. Adding
nodes therefore never changes the motion of existing ones.

Manhattan headings are encoded counter-clockwise, EAST=0, NORTH=1, WEST=2,
SOUTH=3. A left turn adds one (mod 4), a right turn subtracts one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .geometry import Point

DECIMALS = 6
TRACE_MAGIC = "#manet-trace v1"


class Model(str, enum.Enum):
    RANDOM_WAYPOINT = "RandomWaypoint"
    CITY_SECTION = "CitySection"
    MANHATTAN = "Manhattan"

    def __str__(self) -> str:
        return self.value

    @property
    def is_grid(self) -> bool:
        return self is not Model.RANDOM_WAYPOINT


EAST, NORTH, WEST, SOUTH = range(4)
HEADING_STEP = {EAST: (1, 0), NORTH: (0, 1), WEST: (-1, 0), SOUTH: (0, -1)}


def turn_left(heading: int) -> int:
    return (heading + 1) % 4


def turn_right(heading: int) -> int:
    return (heading + 3) % 4


@dataclass(frozen=True)
class MobilityConfig:
    model: Model
    width: float = 1000.0
    height: float = 1000.0
    v_min: float = 0.0
    v_max: float = 25.0
    pause_time: float = 0.0
    block_length: float = 100.0
    duration: float = 1000.0
    node_count: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        for name in ("width", "height", "v_min", "v_max", "pause_time", "block_length", "duration"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("node_count", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if not (0 <= self.v_min <= self.v_max) or self.v_max <= 0:
            raise ValueError(f"need 0 <= v_min <= v_max and v_max > 0 (got {self.v_min}, {self.v_max})")
        if self.pause_time < 0:
            raise ValueError("pause_time must be >= 0")
        if self.duration <= 0:
            raise ValueError("duration must be > 0")
        if self.node_count < 0:
            raise ValueError("node_count must be >= 0")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("network dimensions must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.model.is_grid:
            if self.block_length <= 0:
                raise ValueError("block_length must be positive")
            for side in (self.width, self.height):
                blocks = side / self.block_length
                if blocks < 1 or blocks != round(blocks):
                    raise ValueError(
                        f"width/height must be integer multiples of block_length={self.block_length}"
                    )

    @property
    def grid_shape(self) -> tuple[int, int]:
        """Number of blocks along x and y."""
        return round(self.width / self.block_length), round(self.height / self.block_length)


@dataclass(frozen=True)
class Waypoint:
    depart_time: float
    start: Point
    end: Point
    speed: float

    @property
    def length(self) -> float:
        return math.hypot(self.end.x - self.start.x, self.end.y - self.start.y)


@dataclass(frozen=True)
class NodeTrace:
    node_id: int
    waypoints: tuple[Waypoint, ...]
    duration: float
    _arrays: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def leg_end_time(self, index: int) -> float:
        if index + 1 < len(self.waypoints):
            return self.waypoints[index + 1].depart_time
        wp = self.waypoints[index]
        if wp.speed > 0:
            return _q_up(wp.depart_time + wp.length / wp.speed)
        return max(self.duration, wp.depart_time)

    def arrays(self) -> dict:
        """Columnar view (departs, ends, starts, stops) used for vectorized sampling."""
        if self._arrays is None:
            wps = self.waypoints
            arrays = {
                "depart": np.array([w.depart_time for w in wps]),
                "end": np.array([self.leg_end_time(i) for i in range(len(wps))]),
                "start": np.array([w.start for w in wps], dtype=float).reshape(-1, 2),
                "stop": np.array([w.end for w in wps], dtype=float).reshape(-1, 2),
            }
            object.__setattr__(self, "_arrays", arrays)
        return self._arrays


def _q(x: float) -> float:
    return round(float(x), DECIMALS)


def _q_up(x: float) -> float:
    r = round(x, DECIMALS)
    if r < x:
        r = round(r + 10.0**-DECIMALS, DECIMALS)
    return r


def node_rng(seed: int, node_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(node_id,))))


def draw_speed(rng: np.random.Generator, v_min: float, v_max: float) -> float:
    """Uniform speed on (v_min, v_max]; never zero, exactly v_max when v_min == v_max."""
    u = rng.random()
    return max(_q(v_max - (v_max - v_min) * u), 10.0**-DECIMALS)


class _LegBuilder:
    def __init__(self, start: Point, duration: float):
        self.position = start
        self.time = 0.0
        self.duration = duration
        self.legs: list[Waypoint] = []

    @property
    def done(self) -> bool:
        return self.time >= self.duration

    def move(self, target: Point, speed: float) -> None:
        wp = Waypoint(self.time, self.position, target, speed)
        self.legs.append(wp)
        self.time = _q_up(self.time + wp.length / speed)
        self.position = target

    def pause(self, seconds: float) -> None:
        if seconds <= 0:
            return
        self.legs.append(Waypoint(self.time, self.position, self.position, 0.0))
        self.time = _q(self.time + seconds)

    def trace(self, node_id: int) -> NodeTrace:
        if not self.legs:
            # never moved (cannot happen for positive duration, kept for safety)
            self.legs.append(Waypoint(0.0, self.position, self.position, 0.0))
        return NodeTrace(node_id, tuple(self.legs), self.duration)


def generate_random_waypoint(config: MobilityConfig, node_id: int) -> NodeTrace:
    if config.model is not Model.RANDOM_WAYPOINT:
        raise ValueError(f"expected RandomWaypoint config, got {config.model}")
    rng = node_rng(config.seed, node_id)

    def uniform_point() -> Point:
        return Point(_q(rng.uniform(0, config.width)), _q(rng.uniform(0, config.height)))

    builder = _LegBuilder(uniform_point(), config.duration)
    while not builder.done:
        target = uniform_point()
        speed = draw_speed(rng, config.v_min, config.v_max)
        if target == builder.position:
            continue
        builder.move(target, speed)
        if not builder.done:
            builder.pause(config.pause_time)
    return builder.trace(node_id)


def _intersection(config: MobilityConfig, ix: int, iy: int) -> Point:
    return Point(_q(ix * config.block_length), _q(iy * config.block_length))


def city_section_path(src: tuple[int, int], dst: tuple[int, int]) -> list[tuple[int, int]]:
    """Corner points of the least-time grid route from ``src`` to ``dst``.

    At a single speed every monotone staircase is a least-time route; we take
    the L-shaped one that first covers the axis with the larger remaining
    displacement (horizontal on ties).
    """
    dx, dy = dst[0] - src[0], dst[1] - src[1]
    if dx == 0 and dy == 0:
        return [src]
    if abs(dx) >= abs(dy):
        corner = (dst[0], src[1])
    else:
        corner = (src[0], dst[1])
    points = [src, corner, dst]
    return [src] + [p for prev, p in zip(points, points[1:]) if p != prev]


def generate_city_section(config: MobilityConfig, node_id: int) -> NodeTrace:
    if config.model is not Model.CITY_SECTION:
        raise ValueError(f"expected CitySection config, got {config.model}")
    rng = node_rng(config.seed, node_id)
    nx, ny = config.grid_shape
    here = (int(rng.integers(0, nx + 1)), int(rng.integers(0, ny + 1)))
    builder = _LegBuilder(_intersection(config, *here), config.duration)
    while not builder.done:
        target = (int(rng.integers(0, nx + 1)), int(rng.integers(0, ny + 1)))
        speed = draw_speed(rng, config.v_min, config.v_max)
        if target == here:
            continue
        for corner in city_section_path(here, target)[1:]:
            builder.move(_intersection(config, *corner), speed)
        here = target
        if not builder.done:
            builder.pause(config.pause_time)
    return builder.trace(node_id)


def manhattan_options(position: tuple[int, int], heading: int | None, grid_shape: tuple[int, int]) -> list[int]:
    """Feasible headings at an intersection, U-turns excluded once moving."""
    nx, ny = grid_shape

    def inside(h: int) -> bool:
        sx, sy = HEADING_STEP[h]
        x, y = position[0] + sx, position[1] + sy
        return 0 <= x <= nx and 0 <= y <= ny

    if heading is None:
        return [h for h in range(4) if inside(h)]
    return [h for h in (heading, turn_left(heading), turn_right(heading)) if inside(h)]


def manhattan_next_heading(
    rng: np.random.Generator,
    position: tuple[int, int],
    heading: int | None,
    grid_shape: tuple[int, int],
) -> int:
    """Pick the next block direction.

    First move: uniform over feasible directions. Afterwards: straight 1/2 and
    each turn 1/4 when all three are open; 1/2 each with two options; forced
    with one. A dead end (only possible on a degenerate grid) reverses.
    """
    options = manhattan_options(position, heading, grid_shape)
    if heading is None or len(options) < 3:
        if not options:
            return (heading + 2) % 4
        return options[int(rng.integers(0, len(options)))]
    u = rng.random()
    if u < 0.5:
        return heading
    return turn_left(heading) if u < 0.75 else turn_right(heading)


def generate_manhattan(config: MobilityConfig, node_id: int) -> NodeTrace:
    if config.model is not Model.MANHATTAN:
        raise ValueError(f"expected Manhattan config, got {config.model}")
    rng = node_rng(config.seed, node_id)
    grid = config.grid_shape
    here = (int(rng.integers(0, grid[0] + 1)), int(rng.integers(0, grid[1] + 1)))
    heading = None
    builder = _LegBuilder(_intersection(config, *here), config.duration)
    while not builder.done:
        heading = manhattan_next_heading(rng, here, heading, grid)
        sx, sy = HEADING_STEP[heading]
        here = (here[0] + sx, here[1] + sy)
        builder.move(_intersection(config, *here), draw_speed(rng, config.v_min, config.v_max))
    return builder.trace(node_id)


GENERATORS = {
    Model.RANDOM_WAYPOINT: generate_random_waypoint,
    Model.CITY_SECTION: generate_city_section,
    Model.MANHATTAN: generate_manhattan,
}


def generate_traces(config: MobilityConfig) -> list[NodeTrace]:
    generate = GENERATORS[config.model]
    return [generate(config, i) for i in range(config.node_count)]


def _lerp(start: np.ndarray, stop: np.ndarray, frac: np.ndarray) -> np.ndarray:
    # (1-f)*a + f*b hits both endpoints exactly; a constant coordinate stays exact
    return np.where(start == stop, start, (1.0 - frac) * start + frac * stop)


def _sample(trace: NodeTrace, times: np.ndarray) -> np.ndarray:
    a = trace.arrays()
    idx = np.searchsorted(a["depart"], times, side="right") - 1
    idx = np.clip(idx, 0, len(a["depart"]) - 1)
    span = a["end"][idx] - a["depart"][idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(span > 0, (times - a["depart"][idx]) / span, 1.0)
    frac = np.clip(frac, 0.0, 1.0)[:, None]
    return _lerp(a["start"][idx], a["stop"][idx], frac)


def position_at(trace: NodeTrace, t: float) -> Point:
    if not 0 <= t <= trace.duration:
        raise ValueError(f"t={t} outside [0, {trace.duration}]")
    x, y = _sample(trace, np.array([float(t)]))[0]
    return Point(float(x), float(y))


def positions_at(traces: Sequence[NodeTrace], times: Iterable[float]) -> np.ndarray:
    """Positions of every node at every time, shape (len(times), len(traces), 2)."""
    times = np.asarray(list(times), dtype=float)
    out = np.empty((len(times), len(traces), 2))
    for j, trace in enumerate(traces):
        out[:, j, :] = _sample(trace, times)
    return out


# --- trace files -----------------------------------------------------------

_HEADER_FIELDS = ("model", "width", "height", "v_min", "v_max", "pause_time",
                  "block_length", "duration", "node_count", "seed")


class TraceFormatError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{x:.{DECIMALS}f}"


def format_trace(config: MobilityConfig, traces: Sequence[NodeTrace]) -> str:
    lines = [TRACE_MAGIC]
    for name in _HEADER_FIELDS:
        value = getattr(config, name)
        lines.append(f"# {name}={value!r}" if isinstance(value, float) else f"# {name}={value}")
    for trace in traces:
        for wp in trace.waypoints:
            lines.append(" ".join([
                str(trace.node_id), _fmt(wp.depart_time),
                _fmt(wp.start.x), _fmt(wp.start.y), _fmt(wp.end.x), _fmt(wp.end.y),
                _fmt(wp.speed),
            ]))
    return "\n".join(lines) + "\n"


def write_trace(traces: Sequence[NodeTrace], path: str | Path, config: MobilityConfig) -> Path:
    path = Path(path)
    path.write_text(format_trace(config, traces), encoding="utf-8")
    return path


def _parse_header(header: dict[str, str]) -> MobilityConfig:
    missing = [k for k in _HEADER_FIELDS if k not in header]
    if missing:
        raise TraceFormatError(f"trace header missing keys: {', '.join(missing)}")
    kwargs = {}
    for name in _HEADER_FIELDS:
        raw = header[name]
        if name == "model":
            kwargs[name] = Model(raw)
        elif name in ("node_count", "seed"):
            kwargs[name] = int(raw)
        else:
            kwargs[name] = float(raw)
    return MobilityConfig(**kwargs)


def read_trace(path: str | Path, expect: MobilityConfig | None = None) -> tuple[MobilityConfig, list[NodeTrace]]:
    """Parse a ``.trace`` file. Raises TraceFormatError with the line number on bad input."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_MAGIC:
        raise TraceFormatError(f"{path}:1: expected '{TRACE_MAGIC}'")
    header: dict[str, str] = {}
    legs: dict[int, list[Waypoint]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if not sep:
                raise TraceFormatError(f"{path}:{lineno}: malformed header line")
            header[key.strip()] = value.strip()
            continue
        parts = line.split()
        if len(parts) != 7:
            raise TraceFormatError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
        try:
            node = int(parts[0])
            t, x0, y0, x1, y1, v = map(float, parts[1:])
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
        legs.setdefault(node, []).append(Waypoint(t, Point(x0, y0), Point(x1, y1), v))
    try:
        config = _parse_header(header)
    except ValueError as exc:
        raise TraceFormatError(f"{path}: bad header: {exc}") from None
    if expect is not None and expect != config:
        raise TraceFormatError(f"{path}: header does not match expected configuration")
    for node in legs:
        if not 0 <= node < config.node_count:
            raise TraceFormatError(f"{path}: node id {node} outside [0, {config.node_count})")
        departs = [w.depart_time for w in legs[node]]
        if departs != sorted(departs):
            raise TraceFormatError(f"{path}: node {node} waypoints out of time order")
    traces = [NodeTrace(n, tuple(legs[n]), config.duration) for n in sorted(legs)]
    return config, traces
