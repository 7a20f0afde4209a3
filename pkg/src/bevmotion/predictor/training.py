"""Cache-backed training loop, checkpoints and world-frame prediction."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..config import Config, RasterConfig
from ..errors import EmptyDataset, FormatError, IoError, NumericError
from ..loss import MixtureOutput, nll_batch, softmax_confidences
from ..rasterizer import rasterize, read_cache
from ..rasterizer.cache import read_npz, write_npz
from ..scene import Scene
from .model import PARAM_NAMES, ModelParams, backward_features, forward, forward_features, init_params, pool_rasters
from .optim import AdamState, adamw_step, cosine_warm_restart_lr

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class CachedDataset:
    features: np.ndarray  # [N, F]
    gt: np.ndarray  # [N, T_f, 2]
    valid: np.ndarray  # [N, T_f]
    names: list[str]

    def __len__(self) -> int:
        return len(self.names)

    def subset(self, idx) -> "CachedDataset":
        return CachedDataset(self.features[idx], self.gt[idx], self.valid[idx], [self.names[i] for i in idx])


def load_cached_dataset(cache_dir: str | Path, pool: int = 14, history_steps: int = 11) -> CachedDataset:
    """Read every cache file with ground truth and pool its raster.

    Pooling has no parameters, so it is done once per file rather than per
    training step.
    """
    cache_dir = Path(cache_dir)
    if not cache_dir.is_dir():
        raise IoError(f"cache directory {cache_dir} does not exist")
    feats, gts, valids, names = [], [], [], []
    for path in sorted(cache_dir.glob("*.npz")):
        raster, gt, valid = read_cache(path, history_steps)
        if gt is None or not valid.any():
            continue
        feats.append(pool_rasters(raster.data, pool)[0])
        gts.append(gt.astype(np.float64))
        valids.append(valid)
        names.append(path.name)
    if not names:
        raise EmptyDataset(f"no cached samples with ground truth in {cache_dir}")
    return CachedDataset(np.stack(feats), np.stack(gts), np.stack(valids), names)


def dataset_loss(params: ModelParams, data: CachedDataset, batch: int = 256) -> float:
    total = 0.0
    for s in range(0, len(data), batch):
        means, logits, _ = forward_features(params, data.features[s : s + batch])
        total += nll_batch(means, logits, data.gt[s : s + batch], data.valid[s : s + batch], with_grad=False).sum()
    return total / len(data)


@dataclass
class TrainingResult:
    params: ModelParams
    rows: list[dict] = field(default_factory=list)
    best_iteration: int = 0
    best_val_loss: Optional[float] = None


def train_on_dataset(data: CachedDataset, config: Config) -> TrainingResult:
    """Minibatch AdamW on the mixture NLL; keeps the best validation checkpoint."""
    tc, mc = config.training, config.model
    if len(data) == 0:
        raise EmptyDataset("training set is empty")
    if data.gt.shape[1] != mc.future_steps:
        raise FormatError(f"cached futures have {data.gt.shape[1]} steps, model expects {mc.future_steps}")
    rng = np.random.default_rng(tc.seed)
    order = rng.permutation(len(data))
    n_val = int(round(tc.val_fraction * len(data))) if len(data) > 1 else 0
    val, tr = data.subset(order[:n_val]), data.subset(order[n_val:])
    if len(tr) == 0:
        raise EmptyDataset("no training samples left after the validation split")

    params = init_params(
        data.features.shape[1], mc.hidden, mc.k, mc.future_steps, rng, mc.pool, mc.output_scale,
        mc.init_fan_angle, mc.init_fan_speed,
    )
    state = AdamState.zeros_like(params.arrays())
    rows: list[dict] = []
    best = TrainingResult(params, rows)
    best_val = math.inf
    bs = min(tc.batch_size, len(tr))
    perm, cursor = rng.permutation(len(tr)), 0

    for it in range(tc.iterations):
        if cursor + bs > len(perm):
            perm, cursor = rng.permutation(len(tr)), 0
        idx = perm[cursor : cursor + bs]
        cursor += bs
        lr = cosine_warm_restart_lr(it, tc)
        means, logits, cache = forward_features(params, tr.features[idx])
        loss, d_means, d_logits = nll_batch(means, logits, tr.gt[idx], tr.valid[idx])
        train_loss = float(loss.mean())
        if not math.isfinite(train_loss):
            raise NumericError(f"non-finite training loss at iteration {it}")
        grads = backward_features(params, cache, d_means / bs, d_logits / bs)
        params = params.replace(**adamw_step(params.arrays(), grads, state, tc, lr))

        row = {"iter": it, "lr": lr, "train_loss": train_loss, "val_loss": None}
        rows.append(row)
        last = it == tc.iterations - 1
        if (it + 1) % tc.eval_every == 0 or last:
            if len(val):
                row["val_loss"] = dataset_loss(params, val)
                log.info("iter %d lr %.3g train %.4f val %.4f", it, lr, train_loss, row["val_loss"])
                if row["val_loss"] < best_val:
                    best_val = row["val_loss"]
                    best = TrainingResult(params, rows, it, best_val)
            elif last:
                best = TrainingResult(params, rows, it)
    return best


def train(cache_dir: str | Path, config: Config, checkpoint: str | Path, log_csv: Optional[str | Path] = None):
    """Train from a cache directory, write the best checkpoint (and CSV log)."""
    data = load_cached_dataset(cache_dir, config.model.pool, config.raster.history_steps)
    result = train_on_dataset(data, config)
    save_checkpoint(
        checkpoint,
        result.params,
        {
            "config": config.to_dict(),
            "iteration": result.best_iteration,
            "best_val_loss": result.best_val_loss,
            "samples": len(data),
        },
    )
    if log_csv is not None:
        write_log_csv(log_csv, result.rows)
    return result


def save_checkpoint(path: str | Path, params: ModelParams, meta: dict) -> None:
    info = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "k": params.k,
        "future_steps": params.future_steps,
        "pool": params.pool,
        "output_scale": params.output_scale,
        **meta,
    }
    arrays = {n: np.asarray(a) for n, a in params.arrays().items()}
    arrays["meta"] = np.frombuffer(json.dumps(info, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    write_npz(path, arrays)


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    entries = read_npz(path)
    missing = [n for n in (*PARAM_NAMES, "meta") if n not in entries]
    if missing:
        raise FormatError(f"{path}: checkpoint lacks {missing}")
    meta = json.loads(entries["meta"].tobytes().decode("utf-8"))
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint_version {meta.get('checkpoint_version')!r}")
    params = ModelParams(
        **{n: entries[n] for n in PARAM_NAMES},
        k=int(meta["k"]),
        future_steps=int(meta["future_steps"]),
        pool=int(meta["pool"]),
        output_scale=float(meta["output_scale"]),
    )
    params.check()
    return params, meta


def write_log_csv(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "lr", "train_loss", "val_loss"])
        for r in rows:
            w.writerow([r["iter"], repr(r["lr"]), repr(r["train_loss"]), "" if r["val_loss"] is None else repr(r["val_loss"])])


def predict_scene(params: ModelParams, scene: Scene, raster_config: Optional[RasterConfig] = None) -> list[dict]:
    """Predict every target of ``scene``; trajectories in world coordinates."""
    out = []
    for track in scene.targets:
        raster = rasterize(scene, track.agent_id, raster_config)
        pred: MixtureOutput = forward(params, raster)
        world = raster.frame.local_to_world(pred.means)
        out.append(
            {
                "scene_id": scene.scene_id,
                "agent_id": track.agent_id,
                "trajectories": world.tolist(),
                "confidences": softmax_confidences(pred.logits).tolist(),
            }
        )
    return out
