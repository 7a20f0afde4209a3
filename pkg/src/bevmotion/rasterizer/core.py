"""Scene -> agent-centric multi-channel raster.

Channel layout for ``T_h`` history steps (``C = 3 + 2*T_h``):

* ``0..2``               RGB map
* ``3 .. 3+T_h-1``       target agent box, oldest -> current
* ``3+T_h .. 3+2*T_h-1`` every other agent, same order

Map palette (RGB), drawn in this order so later kinds paint over earlier ones:

=================  ====================================
Crosswalk          (160, 160, 0), filled polygon
LaneCenter         (80, 80, 80)
RoadLine           (160, 160, 160)
RoadEdge           (255, 255, 255)
TrafficLightLane   Red (255,0,0) Yellow (255,255,0) Green (0,255,0) Unknown (0,0,255)
StopSign           (255, 0, 255), 3x3 px square
=================  ====================================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import RasterConfig
from ..errors import NotATarget, UnknownAgent
from ..scene import LightState, MapKind, Scene
from ..transform import FrameTransform, build_agent_frame
from .draw import fill_oriented_box, polygon_pixels, segment_pixels, square_pixels

PALETTE = {
    MapKind.CROSSWALK: (160, 160, 0),
    MapKind.LANE_CENTER: (80, 80, 80),
    MapKind.ROAD_LINE: (160, 160, 160),
    MapKind.ROAD_EDGE: (255, 255, 255),
    MapKind.STOP_SIGN: (255, 0, 255),
}
LIGHT_PALETTE = {
    LightState.RED: (255, 0, 0),
    LightState.YELLOW: (255, 255, 0),
    LightState.GREEN: (0, 255, 0),
    LightState.UNKNOWN: (0, 0, 255),
    None: (0, 0, 255),
}
DRAW_ORDER = (
    MapKind.CROSSWALK,
    MapKind.LANE_CENTER,
    MapKind.ROAD_LINE,
    MapKind.ROAD_EDGE,
    MapKind.TRAFFIC_LIGHT_LANE,
    MapKind.STOP_SIGN,
)


@dataclass
class Raster:
    data: np.ndarray  # uint8 [C, H, W]
    scene_id: str
    agent_id: str
    frame: FrameTransform
    meta: dict = field(default_factory=dict)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def history_steps(self) -> int:
        return (self.channels - 3) // 2

    def target_channel(self, t: int) -> np.ndarray:
        return self.data[3 + t]

    def others_channel(self, t: int) -> np.ndarray:
        return self.data[3 + self.history_steps + t]


def _draw_map(img: np.ndarray, scene: Scene, frame: FrameTransform) -> None:
    """Paint map features; where features overlap the later one in DRAW_ORDER wins."""
    _, h, w = img.shape
    feats = sorted(scene.map_features, key=lambda f: DRAW_ORDER.index(f.kind))
    if not feats:
        return
    colors = np.zeros((len(feats) + 1, 3), dtype=np.uint8)
    counts = [len(f.polyline) for f in feats]
    px_all = frame.world_to_pixel(np.concatenate([f.points for f in feats]))
    bounds = np.cumsum([0] + counts)

    us, vs, ids = [], [], []
    seg_a, seg_b, seg_id = [], [], []
    for i, f in enumerate(feats):
        px = px_all[bounds[i] : bounds[i + 1]]
        if f.kind is MapKind.TRAFFIC_LIGHT_LANE:
            colors[i + 1] = LIGHT_PALETTE[f.light_state]
        else:
            colors[i + 1] = PALETTE[f.kind]
        if f.kind is MapKind.CROSSWALK:
            u, v = polygon_pixels(px, h, w)
        elif f.kind is MapKind.STOP_SIGN:
            u, v = square_pixels(px[0], 1, h, w)
        else:
            seg_a.append(px[:-1])
            seg_b.append(px[1:])
            seg_id.append(np.full(len(px) - 1, i + 1))
            continue
        us.append(u)
        vs.append(v)
        ids.append(np.full(len(u), i + 1))
    if seg_a:
        u, v, seg = segment_pixels(np.concatenate(seg_a), np.concatenate(seg_b), h, w)
        us.append(u)
        vs.append(v)
        ids.append(np.concatenate(seg_id)[seg])
    if not us:
        return
    lin = np.concatenate(vs) * w + np.concatenate(us)
    prio = np.zeros(h * w, dtype=np.intp)
    np.maximum.at(prio, lin, np.concatenate(ids))
    painted = np.flatnonzero(prio)
    img.reshape(3, -1)[:, painted] = colors[prio[painted]].T


def _draw_boxes(img: np.ndarray, snaps: np.ndarray, frame: FrameTransform) -> None:
    """Fill one box per valid row of ``snaps`` (T_h x 8) into ``img`` (T_h x H x W).

    Rows with non-finite geometry cannot be placed and are skipped; parsed
    scenes never contain them.
    """
    valid = (snaps[:, 7] > 0) & np.isfinite(snaps[:, [0, 1, 4, 5, 6]]).all(axis=1)
    if not valid.any():
        return
    centers = frame.world_to_pixel(snaps[:, :2])
    angles = frame.heading_to_local(snaps[:, 4])
    for t in np.flatnonzero(valid):
        fill_oriented_box(
            img[t],
            centers[t],
            angles[t],
            0.5 * snaps[t, 5] / frame.scale,
            0.5 * snaps[t, 6] / frame.scale,
        )


def _history_rows(hist: np.ndarray, steps: int) -> np.ndarray:
    if len(hist) >= steps:
        return hist[len(hist) - steps :]
    pad = np.zeros((steps - len(hist), 8))
    return np.concatenate([pad, hist])


def rasterize(scene: Scene, target_id: str, config: Optional[RasterConfig] = None) -> Raster:
    config = config or RasterConfig()
    target = scene.track(target_id)
    if target is None:
        raise UnknownAgent(f"scene {scene.scene_id!r} has no agent {target_id!r}")
    if not target.is_prediction_target:
        raise NotATarget(f"agent {target_id!r} in scene {scene.scene_id!r} is not a prediction target")
    frame = build_agent_frame(target.current, config.scale, config.anchor, config.min_speed)

    steps = config.history_steps
    data = np.zeros((config.channels, config.height, config.width), dtype=np.uint8)
    _draw_map(data[0:3], scene, frame)
    for track in scene.tracks:
        rows = _history_rows(track.history_array, steps)
        if track.agent_id == target_id:
            _draw_boxes(data[3 : 3 + steps], rows, frame)
        else:
            _draw_boxes(data[3 + steps : 3 + 2 * steps], rows, frame)

    meta = {"scene_id": scene.scene_id, "agent_id": target_id, "object_type": target.object_type.value}
    return Raster(data, scene.scene_id, target_id, frame, meta)


def local_future(scene: Scene, target_id: str, frame: FrameTransform):
    """Ground-truth future of ``target_id`` in the local frame, or ``(None, zeros)``."""
    track = scene.track(target_id)
    if track is None:
        raise UnknownAgent(f"scene {scene.scene_id!r} has no agent {target_id!r}")
    fut = track.future_array
    if fut is None:
        return None, None
    valid = fut[:, 7] > 0
    pts = frame.world_to_local(fut[:, :2])
    pts[~valid] = 0.0
    return pts, valid
