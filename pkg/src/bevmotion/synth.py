"""Deterministic synthetic driving scenes.

Two layouts, both built in a canonical frame (ego at the origin driving +x in
the right-hand lane) and then moved by a random rigid pose:

* ``StraightRoad``: two-lane road, several agents drive straight; up to four
  of them are prediction targets.
* ``TIntersection``: a side road branches off to the left. With probability
  ``branch_probability`` the ego's future turns left onto it along a
  constant-curvature arc, otherwise it continues straight. The turn always
  starts after the current time, so the history does not reveal the mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidSpec
from .scene import (
    FUTURE_STEPS,
    HISTORY_STEPS,
    TIMESTEP,
    AgentSnapshot,
    LightState,
    MapFeature,
    MapKind,
    ObjectType,
    Scene,
    Track,
)

LANE_WIDTH = 3.5
TURN_RADIUS = 8.0
ROAD_BEGIN, ROAD_END = -120.0, 160.0
SIZES = {
    ObjectType.VEHICLE: (4.5, 2.0),
    ObjectType.CYCLIST: (1.8, 0.7),
    ObjectType.PEDESTRIAN: (0.7, 0.7),
}


class ScenarioKind(str, Enum):
    STRAIGHT_ROAD = "StraightRoad"
    T_INTERSECTION = "TIntersection"


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind = ScenarioKind.T_INTERSECTION
    branch_probability: float = 0.5
    speed_range: tuple[float, float] = (8.0, 12.0)
    junction_range: tuple[float, float] = (18.0, 26.0)  # ego -> side-road center at current time, meters
    noise_sigma: float = 0.1
    count: int = 100
    seed: int = 0
    max_others: int = 3

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "kind", ScenarioKind(self.kind))
        except ValueError:
            raise InvalidSpec(f"unknown scenario kind {self.kind!r}") from None

    def check(self) -> None:
        lo, hi = self.speed_range
        jlo, jhi = self.junction_range
        if not 0.0 <= self.branch_probability <= 1.0:
            raise InvalidSpec(f"branch_probability {self.branch_probability} outside [0, 1]")
        if not self.noise_sigma >= 0:
            raise InvalidSpec(f"noise_sigma {self.noise_sigma} < 0")
        if not 0 < lo <= hi:
            raise InvalidSpec(f"speed_range {self.speed_range} must satisfy 0 < min <= max")
        if not TURN_RADIUS - LANE_WIDTH / 2 <= jlo <= jhi:
            raise InvalidSpec(f"junction_range {self.junction_range} must start at >= {TURN_RADIUS - LANE_WIDTH / 2}")
        if self.count < 0 or self.max_others < 0:
            raise InvalidSpec("count and max_others must be >= 0")


def _wrap(a):
    a = np.arctan2(np.sin(a), np.cos(a))
    return np.where(a <= -math.pi, a + 2 * math.pi, a)


class _Pose:
    """Canonical -> world rigid motion."""

    def __init__(self, theta: float, tx: float, ty: float):
        self.c, self.s, self.theta = math.cos(theta), math.sin(theta), theta
        self.t = np.array([tx, ty])

    def points(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return np.stack([self.c * p[..., 0] - self.s * p[..., 1], self.s * p[..., 0] + self.c * p[..., 1]], -1) + self.t

    def vectors(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        return np.stack([self.c * v[..., 0] - self.s * v[..., 1], self.s * v[..., 0] + self.c * v[..., 1]], -1)


def _times():
    steps = np.arange(-(HISTORY_STEPS - 1), FUTURE_STEPS + 1)
    return steps * TIMESTEP


def _straight_states(x0, y0, heading, speed):
    """(N, 5) rows of x, y, vx, vy, heading for constant-velocity motion."""
    t = _times()
    d = np.array([math.cos(heading), math.sin(heading)])
    pos = np.array([x0, y0]) + speed * t[:, None] * d
    vel = np.broadcast_to(speed * d, pos.shape)
    return np.column_stack([pos, vel, np.full(len(t), heading)])


def _turn_states(speed: float, turn_start: float):
    """Ego path that turns left 90 degrees with radius TURN_RADIUS at ``x = turn_start``."""
    s = speed * _times()
    arc = TURN_RADIUS * math.pi / 2
    phi = np.clip((s - turn_start) / TURN_RADIUS, 0.0, math.pi / 2)
    x = np.where(s <= turn_start, s, turn_start + TURN_RADIUS * np.sin(phi))
    y = np.where(s <= turn_start, 0.0, TURN_RADIUS * (1 - np.cos(phi)))
    after = s > turn_start + arc
    x = np.where(after, turn_start + TURN_RADIUS, x)
    y = np.where(after, TURN_RADIUS + (s - turn_start - arc), y)
    heading = np.where(after, math.pi / 2, phi)
    return np.column_stack([x, y, speed * np.cos(heading), speed * np.sin(heading), heading])


def _to_track(agent_id, otype, states, pose, rng, sigma, target, valid_from=0):
    length, width = SIZES[otype]
    pos = pose.points(states[:, :2])
    if sigma > 0:
        pos = pos + rng.normal(0.0, sigma, pos.shape)
    vel = pose.vectors(states[:, 2:4])
    heading = _wrap(states[:, 4] + pose.theta)
    snaps = []
    for i in range(len(states)):
        if i < valid_from:
            snaps.append(AgentSnapshot.invalid())
        else:
            snaps.append(
                AgentSnapshot(
                    float(pos[i, 0]), float(pos[i, 1]), float(vel[i, 0]), float(vel[i, 1]),
                    float(heading[i]), length, width, True,
                )
            )
    return Track(agent_id, otype, tuple(snaps[:HISTORY_STEPS]), tuple(snaps[HISTORY_STEPS:]), target)


def _line(kind, pts, pose, light=None):
    world = pose.points(np.asarray(pts, dtype=np.float64))
    return MapFeature(kind, tuple((float(x), float(y)) for x, y in world), light)


def _road_map(pose, junction_x=None, rng=None):
    w = LANE_WIDTH
    far_edge, near_edge, mid = -w / 2, 1.5 * w, w / 2
    feats = [
        _line(MapKind.ROAD_EDGE, [[ROAD_BEGIN, far_edge], [ROAD_END, far_edge]], pose),
        _line(MapKind.ROAD_LINE, [[ROAD_BEGIN, mid], [ROAD_END, mid]], pose),
        _line(MapKind.LANE_CENTER, [[ROAD_BEGIN, 0.0], [ROAD_END, 0.0]], pose),
        _line(MapKind.LANE_CENTER, [[ROAD_END, w], [ROAD_BEGIN, w]], pose),
    ]
    if junction_x is None:
        feats.append(_line(MapKind.ROAD_EDGE, [[ROAD_BEGIN, near_edge], [ROAD_END, near_edge]], pose))
        return feats
    jx = junction_x
    top = 90.0
    feats += [
        _line(MapKind.ROAD_EDGE, [[ROAD_BEGIN, near_edge], [jx - w, near_edge], [jx - w, top]], pose),
        _line(MapKind.ROAD_EDGE, [[jx + w, top], [jx + w, near_edge], [ROAD_END, near_edge]], pose),
        _line(MapKind.ROAD_LINE, [[jx, near_edge], [jx, top]], pose),
        _line(MapKind.LANE_CENTER, [[jx + w / 2, near_edge], [jx + w / 2, top]], pose),
        _line(MapKind.LANE_CENTER, [[jx - w / 2, top], [jx - w / 2, near_edge]], pose),
        _line(
            MapKind.CROSSWALK,
            [[jx - w, near_edge + 1.5], [jx + w, near_edge + 1.5], [jx + w, near_edge + 4.5], [jx - w, near_edge + 4.5]],
            pose,
        ),
        _line(MapKind.STOP_SIGN, [[jx - w - 1.0, near_edge + 0.5]], pose),
        _line(
            MapKind.TRAFFIC_LIGHT_LANE,
            [[jx - w - 12.0, 0.0], [jx - w, 0.0]],
            pose,
            list(LightState)[int(rng.integers(len(LightState)))],
        ),
    ]
    return feats


def _others(rng, pose, sigma, n, start_index, targets_allowed):
    tracks = []
    for j in range(n):
        roll = rng.random()
        valid_from = int(rng.integers(1, HISTORY_STEPS)) if rng.random() < 0.2 else 0
        if roll < 0.5:
            otype = ObjectType.VEHICLE
            states = _straight_states(rng.uniform(-30, 90), LANE_WIDTH, math.pi, rng.uniform(5, 12))
        elif roll < 0.7:
            otype = ObjectType.VEHICLE
            states = _straight_states(rng.uniform(-40, 60), -LANE_WIDTH + 0.5, 0.0, 0.0)
        elif roll < 0.85:
            otype = ObjectType.CYCLIST
            states = _straight_states(rng.uniform(-40, 40), -1.0, 0.0, rng.uniform(3, 6))
        else:
            otype = ObjectType.PEDESTRIAN
            states = _straight_states(rng.uniform(-30, 30), -3.0, rng.choice([0.0, math.pi]), rng.uniform(0.8, 1.8))
        target = targets_allowed and valid_from == 0 and rng.random() < 0.5
        tracks.append(_to_track(f"a{start_index + j}", otype, states, pose, rng, sigma, target, valid_from))
    return tracks


def generate_scene(spec: ScenarioSpec, index: int) -> Scene:
    rng = np.random.default_rng(spec.seed + index)
    pose = _Pose(rng.uniform(-math.pi, math.pi), rng.uniform(-500, 500), rng.uniform(-500, 500))
    speed = rng.uniform(*spec.speed_range)
    if spec.kind is ScenarioKind.T_INTERSECTION:
        junction_x = rng.uniform(*spec.junction_range)
        turns = rng.random() < spec.branch_probability
        turn_start = junction_x + LANE_WIDTH / 2 - TURN_RADIUS
        states = _turn_states(speed, turn_start) if turns else _straight_states(0.0, 0.0, 0.0, speed)
        feats = _road_map(pose, junction_x, rng)
        prefix, others_targets = "tint", False
    else:
        states = _straight_states(0.0, 0.0, 0.0, speed)
        feats = _road_map(pose)
        prefix, others_targets = "road", True
    ego = _to_track("ego", ObjectType.VEHICLE, states, pose, rng, spec.noise_sigma, True)
    n_others = int(rng.integers(0, spec.max_others + 1))
    others = _others(rng, pose, spec.noise_sigma, n_others, 1, others_targets)
    return Scene(f"{prefix}-s{spec.seed}-{index:05d}", tuple(feats), (ego, *others))


def generate(spec: ScenarioSpec) -> list[Scene]:
    spec.check()
    return [generate_scene(spec, i) for i in range(spec.count)]
