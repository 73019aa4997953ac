"""Synthetic world and dataset generation.

Worlds come in pairs of views of the same geometry: an HD view with one
centerline polyline per lane (plus lane connectivity), and a nav view
where each road collapses to a single polyline, the arithmetic mean of
its lanes. Scenes are lane-following agents sampled at 10 Hz: 20
observed positions (2 s) and 30 future positions (3 s) for the target.

All randomness is derived from (seed, scene_id), so generation is
deterministic and order-independent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WorldSpec",
    "Lane",
    "Intersection",
    "MapPair",
    "Scene",
    "SceneFormatError",
    "OBSERVED_LEN",
    "FUTURE_LEN",
    "generate_world",
    "generate_scenes",
    "view_points",
    "write_scenes",
    "read_scenes",
    "write_world",
    "read_hd_view",
    "read_nav_view",
]

OBSERVED_LEN = 20   # 2 s at 10 Hz
FUTURE_LEN = 30     # 3 s at 10 Hz
DT = 0.1

_SAMPLE_STEP = 2.0  # polyline sampling step along road centerlines [m]


class SceneFormatError(ValueError):
    """A scene file record is malformed; message names the record index."""


@dataclass(frozen=True)
class WorldSpec:
    """Parameters of a generated world."""

    seed: int = 0
    num_roads: int = 6
    lanes_per_road: int = 2
    lane_width: float = 3.5
    curvature_range: tuple[float, float] = (-0.002, 0.002)
    intersection_count: int = 2

    def __post_init__(self):
        if self.num_roads < 0 or self.intersection_count < 0:
            raise ValueError("counts must be non-negative")
        if not 1 <= self.lanes_per_road <= 3:
            raise ValueError("lanes per road must be in 1..3")
        if self.lane_width <= 0.0:
            raise ValueError("lane width must be positive")


@dataclass
class Lane:
    """One HD lane centerline, sampled on its road's arc-length grid."""

    lane_id: int
    road: int
    index: int
    points: np.ndarray                      # (n, 2)
    successors: list[int] = field(default_factory=list)


@dataclass
class Intersection:
    point: np.ndarray                       # (2,)
    members: list[tuple[int, float]]        # (road index, arc position)


@dataclass
class MapPair:
    """HD view and nav view of the same world."""

    hd_lanes: list[Lane]
    nav_roads: list[np.ndarray]             # one (n, 2) polyline per road
    intersections: list[Intersection] = field(default_factory=list)
    road_lanes: list[list[int]] = field(default_factory=list)
    road_lengths: list[float] = field(default_factory=list)


def _road_points(anchor, theta0, curvature, s_anchor, s_grid):
    """Positions along a constant-curvature road for arc positions s_grid."""
    rel = s_grid - s_anchor
    if abs(curvature) < 1e-12:
        x = anchor[0] + np.cos(theta0) * rel
        y = anchor[1] + np.sin(theta0) * rel
        theta = np.full_like(s_grid, theta0)
    else:
        theta = theta0 + curvature * s_grid
        theta_a = theta0 + curvature * s_anchor
        x = anchor[0] + (np.sin(theta) - math.sin(theta_a)) / curvature
        y = anchor[1] - (np.cos(theta) - math.cos(theta_a)) / curvature
    return np.stack([x, y], axis=1), theta


def generate_world(spec: WorldSpec) -> MapPair:
    """Build a deterministic world of arc/line roads with parallel lanes."""
    rng = np.random.default_rng(spec.seed)
    if spec.num_roads == 0:
        return MapPair(hd_lanes=[], nav_roads=[])

    # Intersection anchor points, spread out with a minimum separation.
    ipoints = []
    while len(ipoints) < spec.intersection_count:
        cand = rng.uniform(-250.0, 250.0, size=2)
        if all(np.linalg.norm(cand - p) > 150.0 for p in ipoints):
            ipoints.append(cand)

    hd_lanes: list[Lane] = []
    nav_roads: list[np.ndarray] = []
    road_lanes: list[list[int]] = []
    road_lengths: list[float] = []
    intersections = [Intersection(point=p, members=[]) for p in ipoints]
    first_heading: dict[int, float] = {}

    for r in range(spec.num_roads):
        length = float(rng.uniform(500.0, 800.0))
        curvature = float(rng.uniform(*spec.curvature_range))
        inter_idx = r // 2 if r // 2 < spec.intersection_count else None
        if inter_idx is None:
            anchor = rng.uniform(-250.0, 250.0, size=2)
            theta0 = float(rng.uniform(0.0, 2.0 * math.pi))
        else:
            anchor = ipoints[inter_idx]
            if inter_idx in first_heading:
                # Second road through the point crosses at a wide angle.
                cross = math.radians(float(rng.uniform(60.0, 120.0)))
                sign = 1.0 if rng.random() < 0.5 else -1.0
                theta0 = first_heading[inter_idx] + sign * cross
            else:
                theta0 = float(rng.uniform(0.0, 2.0 * math.pi))
                first_heading[inter_idx] = theta0
        s_anchor = length / 2.0
        n_pts = int(math.floor(length / _SAMPLE_STEP)) + 1
        s_grid = np.arange(n_pts, dtype=np.float64) * _SAMPLE_STEP
        _center, theta = _road_points(anchor, theta0, curvature,
                                      s_anchor, s_grid)
        normals = np.stack([-np.sin(theta), np.cos(theta)], axis=1)

        lane_ids = []
        lane_arrays = []
        for i in range(spec.lanes_per_road):
            offset = (i - (spec.lanes_per_road - 1) / 2.0) * spec.lane_width
            pts = _center + offset * normals
            lane = Lane(lane_id=len(hd_lanes), road=r, index=i, points=pts)
            lane_ids.append(lane.lane_id)
            lane_arrays.append(pts)
            hd_lanes.append(lane)
        # Nav polyline is the arithmetic mean of the road's lanes.
        nav_roads.append(np.mean(lane_arrays, axis=0))
        road_lanes.append(lane_ids)
        road_lengths.append(float(s_grid[-1]))
        if inter_idx is not None:
            intersections[inter_idx].members.append((r, s_anchor))

    # Lane connectivity across intersections: every lane of one member
    # road can continue onto any lane of the other member roads.
    for inter in intersections:
        for ra, _sa in inter.members:
            for rb, _sb in inter.members:
                if ra == rb:
                    continue
                for la in road_lanes[ra]:
                    hd_lanes[la].successors.extend(road_lanes[rb])

    intersections = [i for i in intersections if len(i.members) >= 2]
    return MapPair(hd_lanes=hd_lanes, nav_roads=nav_roads,
                   intersections=intersections, road_lanes=road_lanes,
                   road_lengths=road_lengths)


def view_points(world: MapPair, source: str) -> np.ndarray:
    """All map polyline points of one view, concatenated to (n, 2)."""
    if source == "hd":
        polys = [lane.points for lane in world.hd_lanes]
    elif source == "nav":
        polys = world.nav_roads
    elif source == "none":
        polys = []
    else:
        raise ValueError(f"unknown map source {source!r}")
    if not polys:
        return np.zeros((0, 2))
    return np.concatenate(polys, axis=0)


@dataclass
class Scene:
    """One prediction instance in local meters."""

    scene_id: int
    agents: list[np.ndarray]                # each (OBSERVED_LEN, 2)
    target: int
    future: np.ndarray                      # (FUTURE_LEN, 2)
    maneuver: str = "straight"              # generator metadata, not serialized

    def __post_init__(self):
        for track in self.agents:
            if track.shape != (OBSERVED_LEN, 2):
                raise ValueError(
                    f"observed track must be ({OBSERVED_LEN}, 2), "
                    f"got {track.shape}"
                )
        if self.future.shape != (FUTURE_LEN, 2):
            raise ValueError(
                f"future must be ({FUTURE_LEN}, 2), got {self.future.shape}"
            )
        if not 0 <= self.target < len(self.agents):
            raise ValueError(f"target index {self.target} out of range")


def _lane_pos(lane: Lane, s: float) -> np.ndarray:
    """Linear interpolation of a lane at road arc position s."""
    grid_pos = s / _SAMPLE_STEP
    idx = int(math.floor(grid_pos))
    idx = min(max(idx, 0), len(lane.points) - 2)
    frac = grid_pos - idx
    return lane.points[idx] + frac * (lane.points[idx + 1] - lane.points[idx])


def _smoothstep(t: float) -> float:
    t = min(1.0, max(0.0, t))
    return t * t * (3.0 - 2.0 * t)


def _straight_track(world, rng, n_steps, speed_range):
    """Lane-follow path; returns (positions, used lane, arc fn) or None."""
    horizon = (n_steps - 1) * DT
    for _ in range(20):
        road = int(rng.integers(0, len(world.road_lanes)))
        lane_id = int(rng.choice(world.road_lanes[road]))
        lane = world.hd_lanes[lane_id]
        direction = 1.0 if rng.random() < 0.5 else -1.0
        speed = float(rng.uniform(*speed_range))
        travel = speed * horizon
        lo, hi = 5.0, world.road_lengths[road] - 5.0
        if hi - lo < travel:
            continue
        if direction > 0:
            s0 = float(rng.uniform(lo, hi - travel))
        else:
            s0 = float(rng.uniform(lo + travel, hi))

        def s_at(t, s0=s0, d=direction, u=speed):
            return s0 + d * u * t

        pos = np.array([_lane_pos(lane, s_at(i * DT)) for i in range(n_steps)])
        return pos, lane, s_at
    return None


def _turn_track(world, rng, speed_range):
    """Path entering an intersection and continuing onto a crossing road."""
    n_steps = OBSERVED_LEN + FUTURE_LEN
    tau = 0.5  # blend half-window [s]
    for _ in range(20):
        inter = world.intersections[int(rng.integers(0, len(world.intersections)))]
        members = list(inter.members)
        ia = int(rng.integers(0, len(members)))
        ib = int(rng.integers(0, len(members)))
        if ia == ib:
            continue
        ra, sa = members[ia]
        rb, sb = members[ib]
        lane_a = world.hd_lanes[int(rng.choice(world.road_lanes[ra]))]
        lane_b = world.hd_lanes[int(rng.choice(world.road_lanes[rb]))]
        dir_a = 1.0 if rng.random() < 0.5 else -1.0
        dir_b = 1.0 if rng.random() < 0.5 else -1.0
        speed = float(rng.uniform(speed_range[0], min(speed_range[1], 12.0)))
        t_turn = float(rng.uniform(2.3, 4.3))
        t_end = (n_steps - 1) * DT

        sa0 = sa - dir_a * speed * t_turn
        ok_a = (5.0 < sa0 < world.road_lengths[ra] - 5.0
                and 5.0 < sa + dir_a * speed * (tau + 0.1)
                < world.road_lengths[ra] - 5.0)
        sb_end = sb + dir_b * speed * (t_end - t_turn)
        ok_b = (5.0 < sb_end < world.road_lengths[rb] - 5.0
                and 5.0 < sb - dir_b * speed * (tau + 0.1)
                < world.road_lengths[rb] - 5.0)
        if not (ok_a and ok_b):
            continue

        pos = np.empty((n_steps, 2))
        for i in range(n_steps):
            t = i * DT
            pa = _lane_pos(lane_a, sa0 + dir_a * speed * t)
            pb = _lane_pos(lane_b, sb + dir_b * speed * (t - t_turn))
            w = _smoothstep((t - (t_turn - tau)) / (2.0 * tau))
            pos[i] = (1.0 - w) * pa + w * pb
        return pos
    return None


def _lane_change_track(world, rng, speed_range):
    """Lane-follow path with one lateral change to an adjacent lane."""
    n_steps = OBSERVED_LEN + FUTURE_LEN
    for _ in range(20):
        road = int(rng.integers(0, len(world.road_lanes)))
        lanes = world.road_lanes[road]
        if len(lanes) < 2:
            return None
        i1 = int(rng.integers(0, len(lanes) - 1))
        lane1 = world.hd_lanes[lanes[i1]]
        lane2 = world.hd_lanes[lanes[i1 + 1]]
        if rng.random() < 0.5:
            lane1, lane2 = lane2, lane1
        direction = 1.0 if rng.random() < 0.5 else -1.0
        speed = float(rng.uniform(*speed_range))
        horizon = (n_steps - 1) * DT
        travel = speed * horizon
        lo, hi = 5.0, world.road_lengths[road] - 5.0
        if hi - lo < travel:
            continue
        s0 = float(rng.uniform(lo, hi - travel)) if direction > 0 \
            else float(rng.uniform(lo + travel, hi))
        t0 = float(rng.uniform(1.0, 3.0))
        dur = float(rng.uniform(1.5, 2.5))
        pos = np.empty((n_steps, 2))
        for i in range(n_steps):
            t = i * DT
            s = s0 + direction * speed * t
            w = _smoothstep((t - t0) / dur)
            pos[i] = (1.0 - w) * _lane_pos(lane1, s) + w * _lane_pos(lane2, s)
        return pos
    return None


def generate_scenes(world: MapPair, n: int, seed: int,
                    noise_sigma: float = 0.1,
                    speed_range: tuple[float, float] = (3.0, 15.0),
                    p_turn: float = 0.35,
                    p_lane_change: float = 0.2) -> list[Scene]:
    """Sample n scenes; scene i depends only on (seed, i)."""
    if not world.hd_lanes:
        raise ValueError("world has no lanes")
    n_steps = OBSERVED_LEN + FUTURE_LEN
    scenes = []
    for scene_id in range(n):
        rng = np.random.default_rng([seed, scene_id])
        draw = rng.random()
        pos = None
        maneuver = "straight"
        if draw < p_turn and world.intersections:
            pos = _turn_track(world, rng, speed_range)
            if pos is not None:
                maneuver = "turn"
        elif draw < p_turn + p_lane_change:
            pos = _lane_change_track(world, rng, speed_range)
            if pos is not None:
                maneuver = "lane_change"
        if pos is None:
            res = _straight_track(world, rng, n_steps, speed_range)
            if res is None:
                raise ValueError("world roads too short for any track")
            pos = res[0]
            maneuver = "straight"
        if noise_sigma > 0.0:
            pos = pos + rng.normal(0.0, noise_sigma, size=pos.shape)

        n_background = int(rng.integers(0, 5))
        tracks = []
        for _ in range(n_background):
            res = _straight_track(world, rng, OBSERVED_LEN, speed_range)
            if res is None:
                continue
            track = res[0]
            if noise_sigma > 0.0:
                track = track + rng.normal(0.0, noise_sigma, size=track.shape)
            tracks.append(track)
        target = int(rng.integers(0, len(tracks) + 1))
        tracks.insert(target, pos[:OBSERVED_LEN])
        scenes.append(Scene(scene_id=scene_id, agents=tracks, target=target,
                            future=pos[OBSERVED_LEN:], maneuver=maneuver))
    return scenes


def _fmt_track(arr) -> str:
    return "[" + ",".join(f"[{x:.6f},{y:.6f}]" for x, y in arr) + "]"


def write_scenes(scenes, path):
    """Write newline-delimited JSON with fixed key order and 6-digit floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for scene in scenes:
            agents = ",".join(_fmt_track(track) for track in scene.agents)
            fh.write(
                f'{{"scene_id":{scene.scene_id},"agents":[{agents}],'
                f'"target":{scene.target},"future":{_fmt_track(scene.future)}}}\n'
            )


def read_scenes(path) -> list[Scene]:
    """Read a scene file written by :func:`write_scenes`."""
    scenes = []
    with open(path, encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                agents = [np.asarray(a, dtype=np.float64)
                          for a in obj["agents"]]
                scene = Scene(
                    scene_id=int(obj["scene_id"]),
                    agents=agents,
                    target=int(obj["target"]),
                    future=np.asarray(obj["future"], dtype=np.float64),
                )
            except (json.JSONDecodeError, KeyError, ValueError,
                    TypeError) as exc:
                raise SceneFormatError(
                    f"{path}: record {index}: {exc}"
                ) from exc
            scenes.append(scene)
    return scenes


def write_world(world: MapPair, hd_path, nav_path):
    """Write the two map views as deterministic JSON files."""
    with open(hd_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write('{"lanes":[\n')
        rows = []
        for lane in world.hd_lanes:
            succ = ",".join(str(s) for s in lane.successors)
            rows.append(
                f'{{"id":{lane.lane_id},"road":{lane.road},'
                f'"index":{lane.index},"successors":[{succ}],'
                f'"points":{_fmt_track(lane.points)}}}'
            )
        fh.write(",\n".join(rows))
        fh.write("\n]}\n")
    with open(nav_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write('{"roads":[\n')
        rows = [f'{{"points":{_fmt_track(poly)}}}' for poly in world.nav_roads]
        fh.write(",\n".join(rows))
        fh.write("\n]}\n")


def read_hd_view(path) -> list[Lane]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return [
        Lane(lane_id=int(entry["id"]), road=int(entry["road"]),
             index=int(entry["index"]),
             points=np.asarray(entry["points"], dtype=np.float64),
             successors=[int(s) for s in entry["successors"]])
        for entry in obj["lanes"]
    ]


def read_nav_view(path) -> list[np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return [np.asarray(entry["points"], dtype=np.float64)
            for entry in obj["roads"]]
