"""Small scene builders shared by the tests."""

import math

from bevmotion.scene import (
    FUTURE_STEPS,
    HISTORY_STEPS,
    AgentSnapshot,
    MapFeature,
    MapKind,
    ObjectType,
    Scene,
    Track,
)


def snap(x, y, vx=0.0, vy=0.0, heading=None, length=4.5, width=2.0, valid=True):
    if heading is None:
        heading = math.atan2(vy, vx) if (vx or vy) else 0.0
    if heading <= -math.pi:
        heading += 2 * math.pi
    return AgentSnapshot(float(x), float(y), float(vx), float(vy), float(heading), length, width, valid)


def moving_track(agent_id, x0, y0, vx, vy, target=False, with_future=True, otype=ObjectType.VEHICLE, length=4.5, width=2.0):
    """Constant-velocity track whose current (t=0) position is (x0, y0)."""
    hist = tuple(snap(x0 + vx * (t - 10) * 0.1, y0 + vy * (t - 10) * 0.1, vx, vy, length=length, width=width) for t in range(HISTORY_STEPS))
    fut = None
    if with_future:
        fut = tuple(snap(x0 + vx * t * 0.1, y0 + vy * t * 0.1, vx, vy, length=length, width=width) for t in range(1, FUTURE_STEPS + 1))
    return Track(agent_id, otype, hist, fut, target)


def static_track(agent_id, x, y, heading=0.0, target=False, valid_from=0, with_future=True):
    hist = tuple(
        snap(x, y, heading=heading) if t >= valid_from else AgentSnapshot.invalid() for t in range(HISTORY_STEPS)
    )
    fut = tuple(snap(x, y, heading=heading) for _ in range(FUTURE_STEPS)) if with_future else None
    return Track(agent_id, ObjectType.VEHICLE, hist, fut, target)


def road_edge(*pts):
    return MapFeature(MapKind.ROAD_EDGE, tuple((float(a), float(b)) for a, b in pts))


def simple_scene(scene_id="s0", tracks=None, features=()):
    if tracks is None:
        tracks = (moving_track("ego", 0.0, 0.0, 10.0, 0.0, target=True),)
    return Scene(scene_id, tuple(features), tuple(tracks))
