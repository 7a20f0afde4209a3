import hashlib
import json
import math
import zipfile

import numpy as np
import pytest
from PIL import Image

from bevmotion.config import RasterConfig
from bevmotion.errors import CorruptionError, FormatError, NotATarget, UnknownAgent
from bevmotion.loss import MixtureOutput
from bevmotion.rasterizer import (
    cache_filename,
    local_future,
    rasterize,
    rasterize_dataset,
    read_cache,
    render_png,
    write_cache,
)
from bevmotion.rasterizer.cache import read_npz, write_npz
from bevmotion.rasterizer.draw import fill_oriented_box, polygon_pixels, segment_pixels
from bevmotion.scene import AgentSnapshot, MapFeature, MapKind, ObjectType, Scene, Track
from bevmotion.synth import ScenarioSpec, generate

from helpers import moving_track, simple_scene, snap, static_track


def centroid(mask):
    v, u = np.nonzero(mask)
    return u.mean(), v.mean()


def test_channel_layout_static_target():
    scene = simple_scene(tracks=(static_track("ego", 7.0, -3.0, heading=0.4, target=True),))
    r = rasterize(scene, "ego")
    assert r.data.shape == (25, 224, 224) and r.data.dtype == np.uint8
    assert not r.data[0:3].any()
    for t in range(11):
        mask = r.target_channel(t)
        assert set(np.unique(mask)) == {0, 255}
        u, v = centroid(mask)
        assert math.hypot(u - 61, v - 112) <= 1.0
    assert not r.data[14:25].any()


def test_other_agent_only_at_current_step():
    other = static_track("late", 10.0, 3.0, valid_from=10)
    r = rasterize(simple_scene(tracks=(moving_track("ego", 0, 0, 8, 0, True), other)), "ego")
    nonzero = [c for c in range(14, 25) if r.data[c].any()]
    assert nonzero == [24]


def test_target_never_in_others():
    a = moving_track("a", 0, 0, 8, 0, True)
    b = moving_track("b", 0, 0, 8, 0, True)  # same pose, different id
    r = rasterize(simple_scene(tracks=(a,)), "a")
    r2 = rasterize(simple_scene(tracks=(a, b)), "a")
    assert not r.data[14:].any()
    assert r2.data[14:].any()
    np.testing.assert_array_equal(r.data[:14], r2.data[:14])


def test_invalid_snapshots_do_not_affect_raster():
    base = static_track("x", 5.0, 5.0, valid_from=6)
    hist = list(base.history)
    hist[0] = AgentSnapshot(-3.0, 2.0, 1.0, 1.0, 0.3, 9.0, 4.0, False)
    hist[3] = AgentSnapshot(1e9, -1e9, 0.0, 0.0, 0.0, 0.0, 0.0, False)
    altered = Track("x", ObjectType.VEHICLE, tuple(hist), base.future)
    ego = moving_track("ego", 0, 0, 8, 0, True)
    r1 = rasterize(simple_scene(tracks=(ego, base)), "ego")
    r2 = rasterize(simple_scene(tracks=(ego, altered)), "ego")
    np.testing.assert_array_equal(r1.data, r2.data)


def test_unknown_and_non_target():
    scene = simple_scene(tracks=(moving_track("ego", 0, 0, 8, 0, True), static_track("p", 3, 3)))
    with pytest.raises(UnknownAgent):
        rasterize(scene, "nobody")
    with pytest.raises(NotATarget):
        rasterize(scene, "p")


def _rigid(scene, theta, tx, ty):
    c, s = math.cos(theta), math.sin(theta)

    def pt(x, y):
        return (c * x - s * y + tx, s * x + c * y + ty)

    def sn(a):
        if not a.valid:
            return a
        h = a.heading + theta
        h = math.atan2(math.sin(h), math.cos(h))
        return AgentSnapshot(*pt(a.x, a.y), c * a.vx - s * a.vy, s * a.vx + c * a.vy, h, a.length, a.width, True)

    feats = tuple(MapFeature(f.kind, tuple(pt(*p) for p in f.polyline), f.light_state) for f in scene.map_features)
    tracks = tuple(
        Track(t.agent_id, t.object_type, tuple(map(sn, t.history)), None if t.future is None else tuple(map(sn, t.future)), t.is_prediction_target)
        for t in scene.tracks
    )
    return Scene(scene.scene_id, feats, tracks)


def test_rigid_motion_example():
    scene = generate(ScenarioSpec(count=1, seed=11))[0]
    moved = _rigid(scene, math.radians(37), 100.0, -50.0)
    a = rasterize(scene, "ego").data
    b = rasterize(moved, "ego").data
    assert (a == b).mean() >= 0.999


def test_local_future_matches_frame():
    scene = simple_scene()
    r = rasterize(scene, "ego")
    pts, valid = local_future(scene, "ego", r.frame)
    assert valid.all()
    np.testing.assert_allclose(pts[-1], (80.0, 0.0), atol=1e-9)


# -- drawing primitives ------------------------------------------------------


def test_oriented_box_matches_pixel_center_rule():
    rng = np.random.default_rng(5)
    for _ in range(30):
        img = np.zeros((40, 40), np.uint8)
        c = rng.uniform(10, 30, 2)
        a = rng.uniform(-math.pi, math.pi)
        hl, hw = rng.uniform(1, 8), rng.uniform(0.5, 4)
        fill_oriented_box(img, c, a, hl, hw)
        vv, uu = np.mgrid[0:40, 0:40]
        du, dv = uu - c[0], vv - c[1]
        along = du * math.cos(a) - dv * math.sin(a)
        across = du * math.sin(a) + dv * math.cos(a)
        inside = (np.abs(along) <= hl + 1e-9) & (np.abs(across) <= hw + 1e-9)
        # boundary pixels may round either way
        edge = (np.abs(np.abs(along) - hl) < 1e-6) | (np.abs(np.abs(across) - hw) < 1e-6)
        assert np.array_equal((img > 0) & ~edge, inside & ~edge)


def test_segment_is_connected_and_clipped():
    u, v, _ = segment_pixels(np.array([[-50.0, 10.0]]), np.array([[300.0, 60.0]]), 224, 224)
    assert u.min() >= 0 and u.max() < 224 and v.min() >= 0 and v.max() < 224
    pts = sorted(set(zip(u.tolist(), v.tolist())))
    us = sorted({p[0] for p in pts})
    assert us == list(range(us[0], us[-1] + 1))


def test_polygon_fill_square():
    u, v = polygon_pixels(np.array([[10.0, 10.0], [20.0, 10.0], [20.0, 20.0], [10.0, 20.0]]), 64, 64)
    assert 100 <= len(u) <= 121


# -- cache ---------------------------------------------------------------------


def _sample_raster():
    scene = generate(ScenarioSpec(count=1, seed=2))[0]
    r = rasterize(scene, "ego")
    gt, valid = local_future(scene, "ego", r.frame)
    return r, gt, valid


def test_cache_round_trip(tmp_path):
    r, gt, valid = _sample_raster()
    write_cache(r, gt, tmp_path / "a.npz", valid)
    r2, gt2, valid2 = read_cache(tmp_path / "a.npz")
    np.testing.assert_array_equal(r2.data, r.data)
    assert r2.frame == r.frame
    np.testing.assert_array_equal(gt2, gt.astype(np.float32))
    np.testing.assert_array_equal(valid2, valid)
    assert (r2.scene_id, r2.agent_id) == (r.scene_id, r.agent_id)
    assert np.load(tmp_path / "a.npz")["raster"].shape == (25, 224, 224)  # a standard NPZ


def test_cache_bytes_deterministic(tmp_path):
    r, gt, valid = _sample_raster()
    write_cache(r, gt, tmp_path / "a.npz", valid)
    write_cache(r, gt, tmp_path / "b.npz", valid)
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()


def test_cache_without_future(tmp_path):
    r, _, _ = _sample_raster()
    write_cache(r, None, tmp_path / "t.npz")
    _, gt, valid = read_cache(tmp_path / "t.npz")
    assert gt is None and not valid.any() and len(valid) == 80


def test_truncated_and_bad_magic(tmp_path):
    r, gt, valid = _sample_raster()
    write_cache(r, gt, tmp_path / "a.npz", valid)
    raw = (tmp_path / "a.npz").read_bytes()
    for cut in (len(raw) // 2, len(raw) - 30, 100):
        (tmp_path / "t.npz").write_bytes(raw[:cut])
        with pytest.raises(CorruptionError):
            read_cache(tmp_path / "t.npz")
    flipped = bytearray(raw)
    flipped[len(raw) // 3] ^= 0xFF
    (tmp_path / "f.npz").write_bytes(bytes(flipped))
    with pytest.raises((CorruptionError, FormatError)):
        read_cache(tmp_path / "f.npz")
    (tmp_path / "m.npz").write_bytes(b"NOTAZIP" + raw[7:])
    with pytest.raises(FormatError):
        read_cache(tmp_path / "m.npz")


def test_wrong_channel_count(tmp_path):
    r, gt, valid = _sample_raster()
    r.data = r.data[:24]
    write_cache(r, gt, tmp_path / "c24.npz", valid)
    with pytest.raises(FormatError, match="expected 25"):
        read_cache(tmp_path / "c24.npz")


def test_write_npz_matches_numpy(tmp_path):
    arrays = {"a": np.arange(12, dtype=np.int16).reshape(3, 4), "b": np.linspace(0, 1, 5).astype(np.float32)}
    write_npz(tmp_path / "x.npz", arrays)
    with np.load(tmp_path / "x.npz") as z:
        for k, v in arrays.items():
            np.testing.assert_array_equal(z[k], v)
            assert z[k].dtype == v.dtype
    assert zipfile.ZipFile(tmp_path / "x.npz").testzip() is None
    assert set(read_npz(tmp_path / "x.npz")) == {"a", "b"}


# -- batch ---------------------------------------------------------------------


def _hashes(d):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.glob("*.npz"))}


def test_dataset_parallelism_equivalence(tmp_path):
    scenes = generate(ScenarioSpec(kind="StraightRoad", count=10, seed=4))
    s1 = rasterize_dataset(scenes, tmp_path / "one", 1)
    s2 = rasterize_dataset(scenes, tmp_path / "two", 3)
    assert 10 <= s1["count"] <= 80
    assert s1["files"] == s2["files"]
    assert _hashes(tmp_path / "one") == _hashes(tmp_path / "two")
    n_targets = sum(len(s.targets) for s in scenes)
    assert s1["count"] == n_targets
    assert all(f == cache_filename(*f[:-4].split("__")) for f in s1["files"])


def test_dataset_collects_item_errors(tmp_path):
    bad = Track("bad", ObjectType.VEHICLE, tuple(AgentSnapshot(0, 0, 0, 0, float("nan"), 4, 2, True) for _ in range(11)), None, True)
    good = moving_track("ego", 0, 0, 8, 0, True)
    summary = rasterize_dataset([simple_scene("mix", (good, bad))], tmp_path, 1)
    assert summary["count"] == 1
    assert len(summary["errors"]) == 1 and summary["errors"][0]["agent_id"] == "bad"


# -- png -------------------------------------------------------------------------


def test_png_plain_and_overlay(tmp_path):
    r, gt, _ = _sample_raster()
    render_png(r, None, tmp_path / "plain.png")
    img = Image.open(tmp_path / "plain.png")
    assert img.size == (224, 224) and img.mode == "RGB"
    assert json.loads(img.text["bevmotion"])["agent_id"] == "ego"

    k = 6
    angles = np.linspace(-1.2, 1.2, k)
    t = np.arange(1, 81)[:, None] * 0.5
    means = np.stack([np.hstack([t * math.cos(a), t * math.sin(a)]) for a in angles])
    means[0] *= 20  # leaves the image; must be clipped without error
    render_png(r, MixtureOutput(means, np.linspace(0, 1, k)), tmp_path / "ov.png")
    pix = np.asarray(Image.open(tmp_path / "ov.png").convert("RGB")).reshape(-1, 3)
    from bevmotion.rasterizer.png import HYPOTHESIS_COLORS

    found = 0
    for hexcol in HYPOTHESIS_COLORS[:k]:
        rgb = np.array([int(hexcol[i : i + 2], 16) for i in (1, 3, 5)])
        found += bool((np.abs(pix.astype(int) - rgb).sum(axis=1) == 0).sum() > 10)
    assert found == k


def test_custom_history_steps():
    cfg = RasterConfig(history_steps=5)
    r = rasterize(simple_scene(), "ego", cfg)
    assert r.channels == 13 and r.history_steps == 5
