import math

import numpy as np
import pytest

from bevmotion.config import Config, TrainingConfig
from bevmotion.errors import EmptyDataset, FormatError, NonFiniteGradient, ShapeMismatch
from bevmotion.loss import nll_batch, softmax_confidences
from bevmotion.predictor import (
    AdamState,
    ModelParams,
    adamw_step,
    backward,
    backward_features,
    constant_velocity_predict,
    cosine_warm_restart_lr,
    forward,
    forward_features,
    init_params,
    load_cached_dataset,
    load_checkpoint,
    predict_scene,
    save_checkpoint,
    train_on_dataset,
)
from bevmotion.predictor.training import CachedDataset
from bevmotion.rasterizer import rasterize, rasterize_dataset
from bevmotion.synth import ScenarioSpec, generate

import oracles
from helpers import moving_track, simple_scene


def tiny_params(rng, f=8, h=4, k=2, t=3, scale=1.0):
    p = init_params(f, h, k, t, rng, output_scale=scale, fan_speed=1.0)
    return p.replace(b1=rng.normal(0, 0.3, h), w2=rng.normal(0, 0.5, p.w2.shape), b2=rng.normal(0, 0.5, p.b2.shape))


def test_output_count():
    rng = np.random.default_rng(0)
    p = init_params(25 * 14 * 14, 16, 6, 80, rng)
    assert p.outputs == 966 == 6 * (2 * 80 + 1)
    out = forward(p, rasterize(simple_scene(), "ego"))
    assert out.means.shape == (6, 80, 2) and out.logits.shape == (6,)
    assert np.all(np.isfinite(out.means))


def test_zero_params_give_origin_and_uniform():
    p = ModelParams(np.zeros((4, 25 * 196)), np.zeros(4), np.zeros((966, 4)), np.zeros(966), 6, 80)
    out = forward(p, rasterize(simple_scene(), "ego"))
    assert not out.means.any()
    np.testing.assert_allclose(out.confidences, np.full(6, 1 / 6), atol=1e-15)


def test_different_rasters_different_outputs():
    rng = np.random.default_rng(1)
    p = init_params(25 * 196, 32, 6, 80, rng)
    a = forward(p, rasterize(simple_scene(), "ego"))
    b = forward(p, rasterize(simple_scene(tracks=(moving_track("ego", 0, 0, 3, 4, True),
                                                  moving_track("o", 10, 3, -5, 0))), "ego"))
    assert not np.allclose(a.means, b.means)


def test_fan_initialisation_spreads_hypotheses():
    p = init_params(10, 4, 6, 80, np.random.default_rng(0))
    means, logits, _ = forward_features(p.replace(w2=np.zeros_like(p.w2)), np.zeros((1, 10)))
    ends = means[0, :, -1]
    np.testing.assert_allclose(np.linalg.norm(ends, axis=1), 80.0, atol=1e-9)
    angles = np.degrees(np.arctan2(ends[:, 1], ends[:, 0]))
    np.testing.assert_allclose(angles, np.linspace(-75, 75, 6), atol=1e-9)
    assert not logits.any()


def _objective(params, x, gt, valid):
    means, logits, _ = forward_features(params, x)
    return nll_batch(means, logits, gt, valid, with_grad=False).mean()


def test_backward_finite_differences_tiny_model():
    rng = np.random.default_rng(7)
    for trial in range(10):
        params = tiny_params(rng)
        x = rng.random((3, 8))
        gt = rng.normal(0, 1, (3, 3, 2))
        valid = np.ones((3, 3), bool)
        valid[1, 0] = False
        means, logits, cache = forward_features(params, x)
        _, dm, dl = nll_batch(means, logits, gt, valid)
        grads = backward_features(params, cache, dm / 3, dl / 3)
        h = 1e-5
        for name, arr in params.arrays().items():
            num = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                plus, minus = arr.copy(), arr.copy()
                plus[idx] += h
                minus[idx] -= h
                num[idx] = (_objective(params.replace(**{name: plus}), x, gt, valid) - _objective(params.replace(**{name: minus}), x, gt, valid)) / (2 * h)
            err = np.abs(grads[name] - num) / np.maximum(np.maximum(np.abs(num), np.abs(grads[name])), 1e-6)
            assert err.max() < 1e-4, (trial, name, err.max())


def test_zero_upstream_and_dead_unit():
    rng = np.random.default_rng(8)
    params = tiny_params(rng)
    params = params.replace(b1=np.array([-100.0, 0.1, 0.1, 0.1]))  # unit 0 is dead for x in [0, 1)
    x = rng.random((2, 8))
    means, logits, cache = forward_features(params, x)
    g0 = backward_features(params, cache, np.zeros_like(means), np.zeros_like(logits))
    assert all(not g.any() for g in g0.values())
    _, dm, dl = nll_batch(means, logits, rng.normal(size=(2, 3, 2)), np.ones((2, 3), bool))
    g = backward_features(params, cache, dm, dl)
    assert not g["w1"][0].any() and g["b1"][0] == 0
    assert g["w1"][1:].any()


def test_backward_single_raster_shapes():
    rng = np.random.default_rng(2)
    p = init_params(25 * 196, 8, 2, 80, rng)
    g = backward(p, rasterize(simple_scene(), "ego"), np.ones((2, 80, 2)), np.zeros(2))
    assert {k: v.shape for k, v in g.items()} == {k: v.shape for k, v in p.arrays().items()}
    with pytest.raises(ShapeMismatch):
        backward(p, rasterize(simple_scene(), "ego"), np.ones((3, 80, 2)), np.zeros(3))


# -- optimizer / schedule ---------------------------------------------------------


def test_adamw_first_step():
    cfg = TrainingConfig()
    state = AdamState.zeros_like({"w": np.ones(1)})
    out = adamw_step({"w": np.ones(1)}, {"w": np.ones(1)}, state, cfg, 1e-3)
    assert out["w"][0] == pytest.approx(oracles.adamw_first_step(), abs=1e-15)
    assert out["w"][0] == pytest.approx(0.99899, abs=1e-8)


def test_adamw_zero_gradient():
    cfg = TrainingConfig(weight_decay=0.0)
    params = {"w": np.array([1.5, -2.0])}
    state = AdamState.zeros_like(params)
    for _ in range(5):
        params = adamw_step(params, {"w": np.zeros(2)}, state, cfg, 1e-3)
    np.testing.assert_array_equal(params["w"], [1.5, -2.0])

    cfg = TrainingConfig(weight_decay=0.01)
    params = {"w": np.array([1.5, -2.0])}
    state = AdamState.zeros_like(params)
    lrs = [1e-3, 5e-4, 2e-4]
    for lr in lrs:
        params = adamw_step(params, {"w": np.zeros(2)}, state, cfg, lr)
    factor = np.prod([1 - lr * 0.01 for lr in lrs])
    np.testing.assert_allclose(params["w"], np.array([1.5, -2.0]) * factor, rtol=1e-15)


def test_adamw_rejects_nonfinite():
    params = {"w": np.ones(2)}
    with pytest.raises(NonFiniteGradient):
        adamw_step(params, {"w": np.array([1.0, np.nan])}, AdamState.zeros_like(params), TrainingConfig(), 1e-3)


def test_schedule_examples():
    cfg = TrainingConfig()
    assert cosine_warm_restart_lr(0, cfg) == 1e-3
    assert cosine_warm_restart_lr(cfg.t0, cfg) == 1e-3
    assert cosine_warm_restart_lr(cfg.t0 // 2, cfg) == pytest.approx(5.05e-4, abs=1e-15)
    assert cosine_warm_restart_lr(cfg.t0 // 2, cfg) == pytest.approx(oracles.cosine_lr(cfg.t0 // 2), abs=1e-15)


def test_schedule_t_mult():
    cfg = TrainingConfig(t0=10, t_mult=2)
    # periods 10, 20, 40 -> restarts at 0, 10, 30, 70
    for it in (0, 10, 30, 70):
        assert cosine_warm_restart_lr(it, cfg) == cfg.lr
    assert cosine_warm_restart_lr(20, cfg) == pytest.approx(cfg.eta_min + 0.5 * (cfg.lr - cfg.eta_min), abs=1e-15)
    assert cosine_warm_restart_lr(50, cfg) == pytest.approx(cfg.eta_min + 0.5 * (cfg.lr - cfg.eta_min), abs=1e-15)
    lrs = [cosine_warm_restart_lr(i, cfg) for i in range(200)]
    assert all(cfg.eta_min <= v <= cfg.lr for v in lrs)


# -- baseline ---------------------------------------------------------------------


def test_constant_velocity():
    out = constant_velocity_predict(moving_track("a", 3, 4, 6, 8, True))
    np.testing.assert_allclose(out.means[0, 0], (1.0, 0.0), atol=1e-12)
    np.testing.assert_allclose(out.means[0, -1], (80.0, 0.0), atol=1e-9)
    assert np.all(out.means == out.means[0])
    np.testing.assert_allclose(out.confidences, np.full(6, 1 / 6))
    still = constant_velocity_predict(moving_track("b", 0, 0, 0, 0, True))
    assert not still.means.any()


# -- training -----------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_cache(tmp_path_factory):
    d = tmp_path_factory.mktemp("cache")
    rasterize_dataset(generate(ScenarioSpec(count=60, seed=9)), d)
    return d


def test_training_deterministic(small_cache, tmp_path):
    cfg = Config.from_dict({"training": {"iterations": 40, "eval_every": 20, "batch_size": 16}, "model": {"hidden": 32}})
    data = load_cached_dataset(small_cache)
    r1 = train_on_dataset(data, cfg)
    r2 = train_on_dataset(data, cfg)
    assert [r["train_loss"] for r in r1.rows] == [r["train_loss"] for r in r2.rows]
    save_checkpoint(tmp_path / "a.npz", r1.params, {"config": cfg.to_dict()})
    save_checkpoint(tmp_path / "b.npz", r2.params, {"config": cfg.to_dict()})
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    params, meta = load_checkpoint(tmp_path / "a.npz")
    for k, v in params.arrays().items():
        np.testing.assert_array_equal(v, r1.params.arrays()[k])
    assert meta["config"]["model"]["hidden"] == 32


def test_training_loss_decreases():
    """200 scenes, 2000 iterations: the last 100 steps beat the first 100."""
    data_scenes = generate(ScenarioSpec(count=200, seed=21))
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        rasterize_dataset(data_scenes, d)
        data = load_cached_dataset(d)
    res = train_on_dataset(data, Config())
    losses = np.array([r["train_loss"] for r in res.rows])
    assert len(losses) == 2000
    assert losses[-100:].mean() < losses[:100].mean()
    assert res.best_val_loss is not None and math.isfinite(res.best_val_loss)


def test_training_errors(tmp_path):
    with pytest.raises(EmptyDataset):
        load_cached_dataset(tmp_path)
    ds = CachedDataset(np.zeros((2, 4)), np.zeros((2, 5, 2)), np.ones((2, 5), bool), ["a", "b"])
    with pytest.raises(FormatError):
        train_on_dataset(ds, Config())


def test_predict_scene_world_frame():
    rng = np.random.default_rng(3)
    p = init_params(25 * 196, 8, 6, 80, rng)
    scene = generate(ScenarioSpec(count=1, seed=5))[0]
    recs = predict_scene(p, scene)
    assert len(recs) == len(scene.targets)
    r = rasterize(scene, recs[0]["agent_id"])
    local = forward(p, r)
    world = np.array(recs[0]["trajectories"])
    np.testing.assert_allclose(r.frame.world_to_local(world), local.means, atol=1e-7)
    np.testing.assert_allclose(recs[0]["confidences"], softmax_confidences(local.logits))
