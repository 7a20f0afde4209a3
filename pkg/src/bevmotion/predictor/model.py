"""Raster -> K trajectories + K confidence logits.

The network is deliberately small: the raster is scaled to [0, 1],
average-pooled to a ``pool x pool`` grid per channel, flattened, and fed
through ``linear -> ReLU -> linear``. The head emits ``K * T_f * 2``
trajectory values (scaled by ``output_scale`` meters) followed by ``K``
logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from ..loss import MixtureOutput
from ..scene import TIMESTEP, Track
from ..transform import build_agent_frame

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class ModelParams:
    w1: np.ndarray  # [H, F]
    b1: np.ndarray  # [H]
    w2: np.ndarray  # [K*(2*T_f+1), H]
    b2: np.ndarray  # [K*(2*T_f+1)]
    k: int
    future_steps: int
    pool: int = 14
    output_scale: float = 10.0

    @property
    def features(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def outputs(self) -> int:
        return self.k * (2 * self.future_steps + 1)

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: getattr(self, n) for n in PARAM_NAMES}

    def replace(self, **arrays) -> "ModelParams":
        d = {**self.arrays(), **arrays}
        return ModelParams(**d, k=self.k, future_steps=self.future_steps, pool=self.pool, output_scale=self.output_scale)

    def check(self) -> None:
        if self.w2.shape != (self.outputs, self.hidden) or self.b2.shape != (self.outputs,):
            raise ShapeMismatch(f"output layer {self.w2.shape} does not match K={self.k}, T_f={self.future_steps}")
        if self.b1.shape != (self.hidden,):
            raise ShapeMismatch(f"b1 {self.b1.shape} does not match hidden width {self.hidden}")


def init_params(
    features: int,
    hidden: int,
    k: int,
    future_steps: int,
    rng: np.random.Generator,
    pool: int = 14,
    output_scale: float = 10.0,
    fan_angle: float = 75.0,
    fan_speed: float = 10.0,
) -> ModelParams:
    """Fan-in uniform init for both layers.

    The trajectory part of the output bias starts as a fan of K
    constant-speed rays over ``+-fan_angle`` degrees; logits start equal.
    With identical initial hypotheses every one of them receives the same
    gradient and they never separate.
    """
    outputs = k * (2 * future_steps + 1)
    bound1 = 1.0 / np.sqrt(features)
    bound2 = 1.0 / np.sqrt(hidden)
    angles = np.deg2rad(np.linspace(-fan_angle, fan_angle, k)) if k > 1 else np.zeros(1)
    t = np.arange(1, future_steps + 1) * TIMESTEP
    rays = fan_speed * t[None, :, None] * np.stack([np.cos(angles), np.sin(angles)], -1)[:, None, :]
    b2 = np.concatenate([rays.ravel() / output_scale, np.zeros(k)])
    return ModelParams(
        w1=rng.uniform(-bound1, bound1, (hidden, features)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-bound2, bound2, (outputs, hidden)),
        b2=b2,
        k=k,
        future_steps=future_steps,
        pool=pool,
        output_scale=output_scale,
    )


def pool_rasters(data: np.ndarray, pool: int = 14) -> np.ndarray:
    """uint8 ``[B, C, H, W]`` (or ``[C, H, W]``) -> float ``[B, C*pool*pool]``."""
    data = np.asarray(data)
    if data.ndim == 3:
        data = data[None]
    b, c, h, w = data.shape
    if h % pool or w % pool:
        raise ShapeMismatch(f"raster {h}x{w} is not divisible into a {pool}x{pool} grid")
    x = data.reshape(b, c, pool, h // pool, pool, w // pool).mean(axis=(3, 5), dtype=np.float64)
    return x.reshape(b, -1) / 255.0


def forward_features(params: ModelParams, x: np.ndarray):
    """Batched forward on pooled features ``x`` [B, F].

    Returns ``(means [B,K,T,2], logits [B,K], cache)``; ``cache`` feeds
    :func:`backward_features`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.features:
        raise ShapeMismatch(f"features {x.shape} do not match model input width {params.features}")
    pre = x @ params.w1.T + params.b1
    h = np.maximum(pre, 0.0)
    out = h @ params.w2.T + params.b2
    n_traj = params.k * params.future_steps * 2
    means = params.output_scale * out[:, :n_traj].reshape(-1, params.k, params.future_steps, 2)
    logits = out[:, n_traj:]
    return means, logits, (x, pre, h)


def backward_features(params: ModelParams, cache, d_means: np.ndarray, d_logits: np.ndarray) -> dict[str, np.ndarray]:
    """Chain rule through the head. ``d_*`` are upstream gradients per sample."""
    x, pre, h = cache
    b = x.shape[0]
    if d_means.shape != (b, params.k, params.future_steps, 2) or d_logits.shape != (b, params.k):
        raise ShapeMismatch(f"upstream gradients {d_means.shape}/{d_logits.shape} do not match the model output")
    d_out = np.concatenate([params.output_scale * d_means.reshape(b, -1), d_logits], axis=1)
    dh = d_out @ params.w2
    d_pre = np.where(pre > 0, dh, 0.0)
    return {
        "w1": d_pre.T @ x,
        "b1": d_pre.sum(axis=0),
        "w2": d_out.T @ h,
        "b2": d_out.sum(axis=0),
    }


def forward(params: ModelParams, raster) -> MixtureOutput:
    """Single raster (object with ``.data`` or a bare uint8 array) -> MixtureOutput."""
    data = getattr(raster, "data", raster)
    means, logits, _ = forward_features(params, pool_rasters(data, params.pool))
    return MixtureOutput(means[0], logits[0])


def backward(params: ModelParams, raster, d_means: np.ndarray, d_logits: np.ndarray) -> dict[str, np.ndarray]:
    data = getattr(raster, "data", raster)
    x = pool_rasters(data, params.pool)
    _, _, cache = forward_features(params, x)
    return backward_features(params, cache, np.asarray(d_means)[None], np.asarray(d_logits)[None])


def constant_velocity_predict(track: Track, k: int = 6, future_steps: int = 80, dt: float = TIMESTEP) -> MixtureOutput:
    """Extrapolate the current velocity in the target's local frame; K copies, uniform logits."""
    cur = track.current
    frame = build_agent_frame(cur)
    v_local = frame.world_to_local(np.array([cur.x + cur.vx, cur.y + cur.vy]))
    steps = np.arange(1, future_steps + 1, dtype=np.float64) * dt
    traj = steps[:, None] * v_local[None, :]
    return MixtureOutput(np.repeat(traj[None], k, axis=0), np.zeros(k))
