"""Agent-centric SE(2) frames.

Local frame: origin at the target's current position, +x along its velocity
(or heading when nearly stationary), +y to its left.

Pixel frame: ``(u, v) = (column, row)``. ``u`` grows with local +x, ``v``
grows downward, so left of motion is ``-v``::

    u = anchor_u + x / scale
    v = anchor_v - y / scale
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrame

DEFAULT_SCALE = 0.5  # meters per pixel
DEFAULT_ANCHOR = (61.0, 112.0)
MIN_SPEED = 0.1  # below this the heading defines the frame


@dataclass(frozen=True)
class FrameTransform:
    rotation: float  # world angle of the local +x axis
    translation: tuple[float, float]  # world position of the local origin
    scale: float = DEFAULT_SCALE
    anchor_pixel: tuple[float, float] = DEFAULT_ANCHOR

    @property
    def _cos_sin(self) -> tuple[float, float]:
        return math.cos(self.rotation), math.sin(self.rotation)

    def world_to_local(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        c, s = self._cos_sin
        dx = p[..., 0] - self.translation[0]
        dy = p[..., 1] - self.translation[1]
        return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=-1)

    def local_to_world(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        c, s = self._cos_sin
        x, y = q[..., 0], q[..., 1]
        return np.stack([c * x - s * y + self.translation[0], s * x + c * y + self.translation[1]], axis=-1)

    def local_to_pixel(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=np.float64)
        return np.stack(
            [self.anchor_pixel[0] + q[..., 0] / self.scale, self.anchor_pixel[1] - q[..., 1] / self.scale], axis=-1
        )

    def pixel_to_local(self, px) -> np.ndarray:
        px = np.asarray(px, dtype=np.float64)
        return np.stack(
            [(px[..., 0] - self.anchor_pixel[0]) * self.scale, (self.anchor_pixel[1] - px[..., 1]) * self.scale],
            axis=-1,
        )

    def world_to_pixel(self, p) -> np.ndarray:
        return self.local_to_pixel(self.world_to_local(p))

    def pixel_to_world(self, px) -> np.ndarray:
        return self.local_to_world(self.pixel_to_local(px))

    def heading_to_local(self, heading):
        """World heading angle -> local-frame angle (counter-clockwise from +x)."""
        return np.asarray(heading, dtype=np.float64) - self.rotation

    def as_array(self) -> np.ndarray:
        """``[rotation, tx, ty, scale, anchor_u, anchor_v]`` as stored in cache files."""
        return np.array([self.rotation, *self.translation, self.scale, *self.anchor_pixel], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "FrameTransform":
        a = [float(v) for v in np.asarray(arr, dtype=np.float64).ravel()]
        return cls(a[0], (a[1], a[2]), a[3], (a[4], a[5]))


def build_agent_frame(
    target_current,
    scale: float = DEFAULT_SCALE,
    anchor_pixel=DEFAULT_ANCHOR,
    min_speed: float = MIN_SPEED,
) -> FrameTransform:
    """Frame that puts ``target_current`` at ``anchor_pixel`` moving along +u.

    The velocity direction defines the frame; below ``min_speed`` the
    snapshot heading is used instead.
    """
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    vx, vy = target_current.vx, target_current.vy
    speed = math.hypot(vx, vy)
    if math.isfinite(speed) and speed >= min_speed:
        rotation = math.atan2(vy, vx)
    elif math.isfinite(target_current.heading):
        rotation = float(target_current.heading)
    else:
        raise DegenerateFrame(
            f"speed {speed!r} below {min_speed} and heading {target_current.heading!r} is not finite"
        )
    return FrameTransform(
        rotation,
        (float(target_current.x), float(target_current.y)),
        float(scale),
        (float(anchor_pixel[0]), float(anchor_pixel[1])),
    )


def world_to_pixel(frame: FrameTransform, p) -> np.ndarray:
    return frame.world_to_pixel(p)


def pixel_to_world(frame: FrameTransform, q) -> np.ndarray:
    return frame.pixel_to_world(q)
