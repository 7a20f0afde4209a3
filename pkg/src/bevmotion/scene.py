"""Scene, track and map types plus the JSON scene format.

A scene file looks like::

    {
      "schema_version": 1,
      "scene_id": "s0001",
      "timestep": 0.1,
      "map_features": [{"kind": "RoadEdge", "polyline": [[0, 0], [10, 0]]}],
      "tracks": [
        {"agent_id": "ego", "object_type": "Vehicle", "is_prediction_target": true,
         "history": [[x, y, vx, vy, heading, length, width, valid], ...],   # 11 rows
         "future":  [[...], ...]}                                             # 80 rows, optional
      ]
    }

All quantities are SI (meters, seconds, radians). ``future`` is omitted for
scenes without ground truth; it is never zero-filled.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import InvariantError, IoError, ParseError, SchemaError

SCHEMA_VERSION = 1
HISTORY_STEPS = 11
FUTURE_STEPS = 80
MAX_TARGETS = 8
TIMESTEP = 0.1


class ObjectType(str, Enum):
    VEHICLE = "Vehicle"
    PEDESTRIAN = "Pedestrian"
    CYCLIST = "Cyclist"


class MapKind(str, Enum):
    LANE_CENTER = "LaneCenter"
    ROAD_LINE = "RoadLine"
    ROAD_EDGE = "RoadEdge"
    CROSSWALK = "Crosswalk"
    STOP_SIGN = "StopSign"
    TRAFFIC_LIGHT_LANE = "TrafficLightLane"


class LightState(str, Enum):
    RED = "Red"
    YELLOW = "Yellow"
    GREEN = "Green"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class AgentSnapshot:
    x: float
    y: float
    vx: float
    vy: float
    heading: float
    length: float
    width: float
    valid: bool

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])

    def to_list(self) -> list:
        return [self.x, self.y, self.vx, self.vy, self.heading, self.length, self.width, self.valid]

    @classmethod
    def from_list(cls, row: Sequence) -> "AgentSnapshot":
        return cls(*(float(v) for v in row[:7]), bool(row[7]))

    @classmethod
    def invalid(cls) -> "AgentSnapshot":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False)


@dataclass(frozen=True)
class Track:
    agent_id: str
    object_type: ObjectType
    history: tuple[AgentSnapshot, ...]
    future: Optional[tuple[AgentSnapshot, ...]] = None
    is_prediction_target: bool = False

    @property
    def current(self) -> AgentSnapshot:
        return self.history[-1]

    @cached_property
    def history_array(self) -> np.ndarray:
        """(T_h, 8) float array, last column is the validity flag as 0/1."""
        return _snapshots_array(self.history)

    @cached_property
    def future_array(self) -> Optional[np.ndarray]:
        return None if self.future is None else _snapshots_array(self.future)


def _snapshots_array(snaps: Iterable[AgentSnapshot]) -> np.ndarray:
    arr = np.array([s.to_list() for s in snaps], dtype=np.float64).reshape(-1, 8)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class MapFeature:
    kind: MapKind
    polyline: tuple[tuple[float, float], ...]
    light_state: Optional[LightState] = None

    @cached_property
    def points(self) -> np.ndarray:
        arr = np.array(self.polyline, dtype=np.float64).reshape(-1, 2)
        arr.setflags(write=False)
        return arr


@dataclass(frozen=True)
class Scene:
    scene_id: str
    map_features: tuple[MapFeature, ...] = ()
    tracks: tuple[Track, ...] = ()
    timestep: float = TIMESTEP

    def track(self, agent_id: str) -> Optional[Track]:
        for t in self.tracks:
            if t.agent_id == agent_id:
                return t
        return None

    @property
    def targets(self) -> list[Track]:
        return [t for t in self.tracks if t.is_prediction_target]


@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


# ---------------------------------------------------------------------------
# validation


def _check_snapshot(s: AgentSnapshot, path: str, out: list[Violation]) -> None:
    if not s.valid:
        return
    nums = (s.x, s.y, s.vx, s.vy, s.heading, s.length, s.width)
    if not all(math.isfinite(v) for v in nums):
        out.append(Violation(path, "non-finite value in valid snapshot"))
        return
    if not (-math.pi < s.heading <= math.pi):
        out.append(Violation(path, f"heading {s.heading!r} outside (-pi, pi]"))
    if not (s.width > 0 and s.length >= s.width):
        out.append(Violation(path, f"extents length={s.length!r} width={s.width!r} violate length >= width > 0"))


def validate_scene(scene: Scene) -> list[Violation]:
    """Check every scene invariant; returns an empty list for a valid scene."""
    out: list[Violation] = []
    if not math.isclose(scene.timestep, TIMESTEP, rel_tol=0, abs_tol=1e-9):
        out.append(Violation("timestep", f"timestep {scene.timestep!r} != {TIMESTEP}"))

    for i, f in enumerate(scene.map_features):
        path = f"map_features[{i}]"
        min_pts = 1 if f.kind is MapKind.STOP_SIGN else 2
        if len(f.polyline) < min_pts:
            out.append(Violation(f"{path}.polyline", f"{f.kind.value} needs >= {min_pts} points, got {len(f.polyline)}"))
        if not np.all(np.isfinite(f.points)):
            out.append(Violation(f"{path}.polyline", "non-finite coordinate"))
        if f.light_state is not None and f.kind is not MapKind.TRAFFIC_LIGHT_LANE:
            out.append(Violation(f"{path}.light_state", f"light_state not allowed for {f.kind.value}"))

    seen: set[str] = set()
    for i, t in enumerate(scene.tracks):
        path = f"tracks[{i}]"
        if t.agent_id in seen:
            out.append(Violation(f"{path}.agent_id", f"duplicate agent_id {t.agent_id!r}"))
        seen.add(t.agent_id)
        if len(t.history) != HISTORY_STEPS:
            out.append(Violation(f"{path}.history", f"history length {len(t.history)} ≠ {HISTORY_STEPS}"))
        if t.future is not None and len(t.future) != FUTURE_STEPS:
            out.append(Violation(f"{path}.future", f"future length {len(t.future)} ≠ {FUTURE_STEPS}"))
        for j, s in enumerate(t.history):
            _check_snapshot(s, f"{path}.history[{j}]", out)
        for j, s in enumerate(t.future or ()):
            _check_snapshot(s, f"{path}.future[{j}]", out)
        if t.is_prediction_target and t.history and not t.history[-1].valid:
            out.append(Violation(f"{path}.history[-1]", f"current snapshot of target {t.agent_id!r} is invalid"))

    n_targets = len(scene.targets)
    if not 1 <= n_targets <= MAX_TARGETS:
        out.append(Violation("tracks", f"{n_targets} prediction targets, expected 1..{MAX_TARGETS}"))
    return out


# ---------------------------------------------------------------------------
# JSON (de)serialization

_TOP_KEYS = {"schema_version", "scene_id", "timestep", "map_features", "tracks"}
_TRACK_KEYS = {"agent_id", "object_type", "is_prediction_target", "history"}
_FEATURE_KEYS = {"kind", "polyline"}


def _keys(obj: Any, required: set, optional: set, where: str, scene_id: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(f"scene {scene_id!r}: {where} must be an object")
    missing = required - obj.keys()
    extra = obj.keys() - required - optional
    if missing:
        raise SchemaError(f"scene {scene_id!r}: {where} missing field(s) {sorted(missing)}")
    if extra:
        raise SchemaError(f"scene {scene_id!r}: {where} has unknown field(s) {sorted(extra)}")


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _snapshot(row: Any, where: str, scene_id: str) -> AgentSnapshot:
    if not isinstance(row, list) or len(row) != 8:
        raise SchemaError(f"scene {scene_id!r}: {where} must be an 8-element array")
    if not all(_is_num(v) for v in row[:7]) or not isinstance(row[7], bool):
        raise SchemaError(f"scene {scene_id!r}: {where} must be [x,y,vx,vy,heading,length,width,valid(bool)]")
    return AgentSnapshot.from_list(row)


def _enum(cls, value: Any, where: str, scene_id: str):
    try:
        return cls(value)
    except ValueError:
        raise SchemaError(f"scene {scene_id!r}: {where} has unknown value {value!r}") from None


def scene_from_dict(d: Any) -> Scene:
    """Build a Scene from decoded JSON, checking structure but not invariants."""
    scene_id = d.get("scene_id", "?") if isinstance(d, dict) else "?"
    _keys(d, _TOP_KEYS, set(), "scene", scene_id)
    if d["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"scene {scene_id!r}: schema_version {d['schema_version']!r} unsupported")
    if not isinstance(scene_id, str):
        raise SchemaError(f"scene {scene_id!r}: scene_id must be a string")
    if not _is_num(d["timestep"]):
        raise SchemaError(f"scene {scene_id!r}: timestep must be a number")
    if not isinstance(d["map_features"], list) or not isinstance(d["tracks"], list):
        raise SchemaError(f"scene {scene_id!r}: map_features and tracks must be arrays")

    features = []
    for i, fd in enumerate(d["map_features"]):
        where = f"map_features[{i}]"
        _keys(fd, _FEATURE_KEYS, {"light_state"}, where, scene_id)
        kind = _enum(MapKind, fd["kind"], f"{where}.kind", scene_id)
        pts = fd["polyline"]
        if not isinstance(pts, list) or not all(
            isinstance(p, list) and len(p) == 2 and all(_is_num(c) for c in p) for p in pts
        ):
            raise SchemaError(f"scene {scene_id!r}: {where}.polyline must be a list of [x, y]")
        light = fd.get("light_state")
        light = None if light is None else _enum(LightState, light, f"{where}.light_state", scene_id)
        features.append(MapFeature(kind, tuple((float(x), float(y)) for x, y in pts), light))

    tracks = []
    for i, td in enumerate(d["tracks"]):
        where = f"tracks[{i}]"
        _keys(td, _TRACK_KEYS, {"future"}, where, scene_id)
        if not isinstance(td["agent_id"], str):
            raise SchemaError(f"scene {scene_id!r}: {where}.agent_id must be a string")
        if not isinstance(td["is_prediction_target"], bool):
            raise SchemaError(f"scene {scene_id!r}: {where}.is_prediction_target must be a bool")
        otype = _enum(ObjectType, td["object_type"], f"{where}.object_type", scene_id)
        if not isinstance(td["history"], list):
            raise SchemaError(f"scene {scene_id!r}: {where}.history must be an array")
        history = tuple(_snapshot(r, f"{where}.history[{j}]", scene_id) for j, r in enumerate(td["history"]))
        future = None
        if "future" in td:
            if not isinstance(td["future"], list):
                raise SchemaError(f"scene {scene_id!r}: {where}.future must be an array")
            future = tuple(_snapshot(r, f"{where}.future[{j}]", scene_id) for j, r in enumerate(td["future"]))
        tracks.append(Track(td["agent_id"], otype, history, future, td["is_prediction_target"]))

    return Scene(scene_id, tuple(features), tuple(tracks), float(d["timestep"]))


def scene_to_dict(scene: Scene) -> dict:
    feats = []
    for f in scene.map_features:
        fd: dict[str, Any] = {"kind": f.kind.value, "polyline": [list(p) for p in f.polyline]}
        if f.light_state is not None:
            fd["light_state"] = f.light_state.value
        feats.append(fd)
    tracks = []
    for t in scene.tracks:
        td: dict[str, Any] = {
            "agent_id": t.agent_id,
            "object_type": t.object_type.value,
            "is_prediction_target": t.is_prediction_target,
            "history": [s.to_list() for s in t.history],
        }
        if t.future is not None:
            td["future"] = [s.to_list() for s in t.future]
        tracks.append(td)
    return {
        "schema_version": SCHEMA_VERSION,
        "scene_id": scene.scene_id,
        "timestep": scene.timestep,
        "map_features": feats,
        "tracks": tracks,
    }


def parse_scene(text: str) -> Scene:
    """Parse and validate scene JSON text."""
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed scene JSON: {e}") from None
    scene = scene_from_dict(d)
    violations = validate_scene(scene)
    if violations:
        raise InvariantError(f"scene {scene.scene_id!r}: " + "; ".join(map(str, violations)))
    return scene


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not UTF-8: {e}") from None
    return parse_scene(text)


def save_scene(scene: Scene, path: str | Path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(scene_to_dict(scene), separators=(",", ":")), encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None


META_SUFFIX = ".meta.json"


def load_scene_dir(directory: str | Path) -> list[Scene]:
    """Load every ``*.json`` scene in a directory, sorted by file name.

    Sidecar files ending in ``.meta.json`` are skipped.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise IoError(f"scene directory {directory} does not exist")
    paths = [p for p in sorted(directory.glob("*.json")) if not p.name.endswith(META_SUFFIX)]
    return [load_scene(p) for p in paths]
