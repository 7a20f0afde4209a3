"""Binary-exact drawing primitives on channel-major uint8 images.

Pixel ``(u, v)`` has its center at integer coordinates; a pixel is covered by
a filled shape when its center lies inside (boundary inclusive).
"""

from __future__ import annotations

import numpy as np


def fill_oriented_box(img: np.ndarray, center, angle: float, half_length: float, half_width: float, value=255) -> None:
    """Fill a rotated rectangle on a 2-D ``img[v, u]``.

    ``angle`` is the direction of the long axis in the local (y-left) frame,
    so in pixel space the axis is ``(cos a, -sin a)``.
    """
    h, w = img.shape
    cu, cv = center
    ca, sa = np.cos(angle), np.sin(angle)
    ext_u = abs(ca) * half_length + abs(sa) * half_width
    ext_v = abs(sa) * half_length + abs(ca) * half_width
    u0 = max(int(np.ceil(cu - ext_u)), 0)
    u1 = min(int(np.floor(cu + ext_u)), w - 1)
    v0 = max(int(np.ceil(cv - ext_v)), 0)
    v1 = min(int(np.floor(cv + ext_v)), h - 1)
    if u0 > u1 or v0 > v1:
        return
    du = np.arange(u0, u1 + 1, dtype=np.float64) - cu
    dv = np.arange(v0, v1 + 1, dtype=np.float64)[:, None] - cv
    # long axis (ca, -sa), short axis (sa, ca) in (u, v)
    along = du * ca - dv * sa
    across = du * sa + dv * ca
    inside = (np.abs(along) <= half_length) & (np.abs(across) <= half_width)
    img[v0 : v1 + 1, u0 : u1 + 1][inside] = value


def _clip_segments(p0: np.ndarray, p1: np.ndarray, lo, hi):
    """Vectorized Liang-Barsky clipping of segments to the box ``[lo, hi]``."""
    d = p1 - p0
    t0 = np.zeros(len(p0))
    t1 = np.ones(len(p0))
    keep = np.ones(len(p0), dtype=bool)
    for axis in (0, 1):
        for p, q in ((-d[:, axis], p0[:, axis] - lo[axis]), (d[:, axis], hi[axis] - p0[:, axis])):
            zero = p == 0
            keep &= ~(zero & (q < 0))
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(zero, 0.0, q / np.where(zero, 1.0, p))
            t0 = np.where(~zero & (p < 0), np.maximum(t0, r), t0)
            t1 = np.where(~zero & (p > 0), np.minimum(t1, r), t1)
    keep &= t0 <= t1
    return p0 + t0[:, None] * d, p0 + t1[:, None] * d, keep


def segment_pixels(p0: np.ndarray, p1: np.ndarray, height: int, width: int):
    """Rasterize many segments at once as 1-px lines.

    Returns integer ``(u, v, segment_index)`` for every covered pixel,
    clipped to the image.
    """
    empty = np.empty(0, np.intp)
    if len(p0) == 0:
        return empty, empty, empty
    a, b, keep = _clip_segments(p0, p1, (-0.5, -0.5), (width - 0.5, height - 0.5))
    idx = np.flatnonzero(keep)
    a, b = a[idx], b[idx]
    if len(a) == 0:
        return empty, empty, empty
    # two samples per pixel of travel along the dominant axis
    n = (np.ceil(2.0 * np.abs(b - a).max(axis=1)).astype(np.intp) + 1).clip(min=2)
    seg = np.repeat(np.arange(len(a)), n)
    starts = np.repeat(np.cumsum(n) - n, n)
    frac = (np.arange(n.sum()) - starts) / (n[seg] - 1)
    xy = a[seg] + frac[:, None] * (b[seg] - a[seg])
    u = np.rint(xy[:, 0]).astype(np.intp)
    v = np.rint(xy[:, 1]).astype(np.intp)
    ok = (u >= 0) & (u < width) & (v >= 0) & (v < height)
    return u[ok], v[ok], idx[seg[ok]]


def polyline_pixels(points: np.ndarray, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer ``(u, v)`` pixels of a 1-px polyline, clipped to the image."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return np.empty(0, np.intp), np.empty(0, np.intp)
    u, v, _ = segment_pixels(pts[:-1], pts[1:], height, width)
    return u, v


def polygon_pixels(points: np.ndarray, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixels whose centers lie inside a simple polygon (even-odd rule)."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        return np.empty(0, np.intp), np.empty(0, np.intp)
    u0 = max(int(np.ceil(pts[:, 0].min())), 0)
    u1 = min(int(np.floor(pts[:, 0].max())), width - 1)
    v0 = max(int(np.ceil(pts[:, 1].min())), 0)
    v1 = min(int(np.floor(pts[:, 1].max())), height - 1)
    if u0 > u1 or v0 > v1:
        return np.empty(0, np.intp), np.empty(0, np.intp)
    uu, vv = np.meshgrid(np.arange(u0, u1 + 1, dtype=np.float64), np.arange(v0, v1 + 1, dtype=np.float64))
    inside = np.zeros(uu.shape, dtype=bool)
    xs, ys = pts[:, 0], pts[:, 1]
    xj, yj = np.roll(xs, 1), np.roll(ys, 1)
    for xa, ya, xb, yb in zip(xs, ys, xj, yj):
        if ya == yb:
            continue
        crosses = (ya > vv) != (yb > vv)
        x_int = xa + (vv - ya) * (xb - xa) / (yb - ya)
        inside ^= crosses & (uu < x_int)
    v_idx, u_idx = np.nonzero(inside)
    return u_idx + u0, v_idx + v0


def square_pixels(center, half: int, height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    cu, cv = int(np.rint(center[0])), int(np.rint(center[1]))
    us = np.arange(cu - half, cu + half + 1)
    vs = np.arange(cv - half, cv + half + 1)
    uu, vv = np.meshgrid(us, vs)
    ok = (uu >= 0) & (uu < width) & (vv >= 0) & (vv < height)
    return uu[ok], vv[ok]
