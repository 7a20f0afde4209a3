"""Trajectory metrics and the per-object-type report.

All metrics run on the 2 Hz subsample of the 10 Hz, 8 s horizon: indices
4, 9, ..., 79 (0.5 s ... 8.0 s).

Miss rate, mAP and overlap rate use simplified single-bucket definitions:

* miss: no hypothesis within ``threshold`` meters of the ground truth at the
  last valid 2 Hz point;
* AP: per object type, each sample contributes its top-confidence hypothesis,
  ranked by confidence; it is a true positive when that hypothesis is not a
  miss; ``AP = sum_n (R_n - R_{n-1}) * P_n``;
* overlap: the top-confidence hypothesis, swept as an oriented box with the
  target's current extents, intersects another agent's ground-truth box at
  some 2 Hz step.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptySet, IoError, MissingPrediction, NoValidSteps, ParseError, ShapeMismatch, UnknownTarget
from .scene import FUTURE_STEPS, ObjectType, Scene

SUBSAMPLE_INDEX = np.arange(4, FUTURE_STEPS, 5)
OBJECT_TYPES = (ObjectType.VEHICLE, ObjectType.PEDESTRIAN, ObjectType.CYCLIST)
REPORT_COLUMNS = ("mAP", "minADE", "minFDE", "miss_rate", "overlap_rate")
MAX_HYPOTHESES = 6


def subsample_2hz(traj: np.ndarray) -> np.ndarray:
    """Keep the 16 points at 0.5 s spacing from an 80-step trajectory (time axis -2)."""
    traj = np.asarray(traj)
    if traj.ndim < 2 or traj.shape[-2] != FUTURE_STEPS:
        raise ShapeMismatch(f"expected [..., {FUTURE_STEPS}, 2], got {traj.shape}")
    return traj[..., SUBSAMPLE_INDEX, :]


def subsample_mask_2hz(valid: np.ndarray) -> np.ndarray:
    valid = np.asarray(valid)
    if valid.shape[-1] != FUTURE_STEPS:
        raise ShapeMismatch(f"expected [..., {FUTURE_STEPS}], got {valid.shape}")
    return valid[..., SUBSAMPLE_INDEX]


def _valid_or_all(valid, n):
    if valid is None:
        return np.ones(n, dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != (n,):
        raise ShapeMismatch(f"mask {valid.shape} does not match {n} steps")
    return valid


def ade(pred, gt, valid=None) -> float:
    """Mean per-step Euclidean distance over valid steps."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    valid = _valid_or_all(valid, len(gt))
    if not valid.any():
        raise NoValidSteps("no valid step for ADE")
    return float(np.linalg.norm(pred[valid] - gt[valid], axis=-1).mean())


def fde(pred, gt, valid=None) -> float:
    """Euclidean distance at the last valid step."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    valid = _valid_or_all(valid, len(gt))
    if not valid.any():
        raise NoValidSteps("no valid step for FDE")
    last = int(np.flatnonzero(valid)[-1])
    return float(np.linalg.norm(pred[last] - gt[last]))


def _per_hypothesis(pred_set, gt, valid):
    pred_set = np.asarray(pred_set, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred_set.ndim != 3 or pred_set.shape[1:] != gt.shape:
        raise ShapeMismatch(f"hypotheses {pred_set.shape} vs ground truth {gt.shape}")
    valid = _valid_or_all(valid, len(gt))
    if not valid.any():
        raise NoValidSteps("no valid step")
    dist = np.linalg.norm(pred_set[:, valid] - gt[valid], axis=-1)  # [K, n_valid]
    return dist.mean(axis=1), dist[:, -1]


def min_ade(pred_set, gt, valid=None) -> float:
    return float(_per_hypothesis(pred_set, gt, valid)[0].min())


def min_fde(pred_set, gt, valid=None) -> float:
    return float(_per_hypothesis(pred_set, gt, valid)[1].min())


# ---------------------------------------------------------------------------
# oriented boxes


def box_corners(cx, cy, heading, length, width) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2, width / 2
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    return local @ np.array([[c, s], [-s, c]]) + np.array([cx, cy])


def boxes_intersect(a: Sequence[float], b: Sequence[float]) -> bool:
    """Separating-axis test for boxes given as ``(cx, cy, heading, length, width)``.

    Touching boxes count as intersecting.
    """
    ca, cb = box_corners(*a), box_corners(*b)
    for heading in (a[2], b[2]):
        for axis in ((math.cos(heading), math.sin(heading)), (-math.sin(heading), math.cos(heading))):
            pa, pb = ca @ axis, cb @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def trajectory_headings(traj: np.ndarray, start_xy, start_heading: float, min_step: float = 1e-3) -> np.ndarray:
    """Heading at each point from the direction of travel; holds the last heading when (nearly) stopped."""
    pts = np.vstack([np.asarray(start_xy, dtype=np.float64)[None], np.asarray(traj, dtype=np.float64)])
    d = np.diff(pts, axis=0)
    out = np.empty(len(d))
    h = float(start_heading)
    for i, (dx, dy) in enumerate(d):
        if math.hypot(dx, dy) >= min_step:
            h = math.atan2(dy, dx)
        out[i] = h
    return out


# ---------------------------------------------------------------------------
# samples and set-level metrics


@dataclass
class EvaluationSample:
    trajectories: np.ndarray  # [K, 80, 2]
    confidences: np.ndarray  # [K]
    gt: np.ndarray  # [80, 2]
    valid: np.ndarray  # [80] bool
    object_type: ObjectType = ObjectType.VEHICLE
    other_agents_future: list = field(default_factory=list)  # [80, 8] snapshot rows per agent
    extent: tuple[float, float] = (4.5, 2.0)  # current (length, width)
    start_xy: tuple[float, float] = (0.0, 0.0)
    start_heading: float = 0.0
    key: tuple[str, str] = ("", "")

    @property
    def top(self) -> int:
        return int(np.argmax(self.confidences))

    def final_displacements(self) -> np.ndarray:
        """Per-hypothesis distance at the last valid 2 Hz point."""
        return _per_hypothesis(subsample_2hz(self.trajectories), subsample_2hz(self.gt), subsample_mask_2hz(self.valid))[1]


def _nonempty(samples):
    samples = list(samples)
    if not samples:
        raise EmptySet("no samples")
    return samples


def is_miss(sample: EvaluationSample, threshold: float = 2.0) -> bool:
    return bool(sample.final_displacements().min() > threshold)


def miss_rate(samples: Iterable[EvaluationSample], threshold: float = 2.0) -> float:
    samples = _nonempty(samples)
    return sum(is_miss(s, threshold) for s in samples) / len(samples)


def ap_from_ranked(hits: Sequence[bool], n_total: Optional[int] = None) -> float:
    """AP of a confidence-ranked hit/miss list; recall is relative to ``n_total`` (default: list length)."""
    hits = np.asarray(hits, dtype=bool)
    n_total = len(hits) if n_total is None else n_total
    if n_total == 0:
        raise EmptySet("no samples")
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    recall = tp / n_total
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - prev) * precision).sum())


def average_precision(samples: Iterable[EvaluationSample], threshold: float = 2.0) -> float:
    """Single-bucket AP of the top-confidence hypotheses of ``samples``."""
    samples = _nonempty(samples)
    conf = np.array([s.confidences[s.top] for s in samples])
    hits = np.array([s.final_displacements()[s.top] <= threshold for s in samples])
    order = np.lexsort((np.arange(len(samples)), -conf))  # stable: confidence desc, then input order
    return ap_from_ranked(hits[order])


def mean_average_precision(samples: Iterable[EvaluationSample], threshold: float = 2.0) -> float:
    """Unweighted mean of per-object-type AP over the types present."""
    samples = _nonempty(samples)
    aps = [
        average_precision([s for s in samples if s.object_type is t], threshold)
        for t in OBJECT_TYPES
        if any(s.object_type is t for s in samples)
    ]
    return float(np.mean(aps))


def sample_overlaps(sample: EvaluationSample) -> bool:
    traj = sample.trajectories[sample.top]
    headings = trajectory_headings(traj, sample.start_xy, sample.start_heading)
    length, width = sample.extent
    for i in SUBSAMPLE_INDEX:
        ego = (traj[i, 0], traj[i, 1], headings[i], length, width)
        for other in sample.other_agents_future:
            row = other[i]
            if row[7] > 0 and boxes_intersect(ego, (row[0], row[1], row[4], row[5], row[6])):
                return True
    return False


def overlap_rate(samples: Iterable[EvaluationSample]) -> float:
    samples = _nonempty(samples)
    return sum(sample_overlaps(s) for s in samples) / len(samples)


# ---------------------------------------------------------------------------
# report


@dataclass
class MetricsReport:
    rows: dict[str, dict]  # "Vehicle" | "Pedestrian" | "Cyclist" | "Avg" -> column -> value
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "config": self.config}

    def write_json(self, path: str | Path) -> None:
        text = json.dumps(_nan_to_none(self.to_dict()), indent=2, sort_keys=True)
        _write(path, text + "\n")

    def write_csv(self, path: str | Path) -> None:
        try:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["object_type", *REPORT_COLUMNS, "count"])
                for name, row in self.rows.items():
                    w.writerow([name, *(_fmt(row[c]) for c in REPORT_COLUMNS), row["count"]])
        except OSError as e:
            raise IoError(f"cannot write {path}: {e}") from None


def _fmt(v) -> str:
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.4f}"


def _nan_to_none(obj):
    if isinstance(obj, dict):
        return {k: _nan_to_none(v) for k, v in obj.items()}
    if isinstance(obj, float) and math.isnan(obj):
        return None
    return obj


def _write(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None


def report_from_samples(samples: Sequence[EvaluationSample], threshold: float = 2.0, config: Optional[dict] = None) -> MetricsReport:
    samples = _nonempty(samples)
    rows: dict[str, dict] = {}
    for t in OBJECT_TYPES:
        group = [s for s in samples if s.object_type is t]
        if not group:
            rows[t.value] = {c: math.nan for c in REPORT_COLUMNS} | {"count": 0}
            continue
        ades, fdes = [], []
        for s in group:
            a, f = _per_hypothesis(subsample_2hz(s.trajectories), subsample_2hz(s.gt), subsample_mask_2hz(s.valid))
            ades.append(a.min())
            fdes.append(f.min())
        rows[t.value] = {
            "mAP": average_precision(group, threshold),
            "minADE": float(np.mean(ades)),
            "minFDE": float(np.mean(fdes)),
            "miss_rate": miss_rate(group, threshold),
            "overlap_rate": overlap_rate(group),
            "count": len(group),
        }
    present = [rows[t.value] for t in OBJECT_TYPES if rows[t.value]["count"]]
    rows["Avg"] = {c: float(np.mean([r[c] for r in present])) for c in REPORT_COLUMNS} | {"count": len(samples)}
    return MetricsReport(rows, config or {})


# ---------------------------------------------------------------------------
# predictions file + scenes -> report


def read_predictions(path: str | Path, max_k: int = MAX_HYPOTHESES) -> dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]:
    """JSON lines ``{scene_id, agent_id, trajectories [K][80][2], confidences [K]}``."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from None
    out = {}
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            key = (rec["scene_id"], rec["agent_id"])
            traj = np.asarray(rec["trajectories"], dtype=np.float64)
            conf = np.asarray(rec["confidences"], dtype=np.float64)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise ParseError(f"{path}:{n}: bad prediction record: {e}") from None
        if traj.ndim != 3 or traj.shape[1:] != (FUTURE_STEPS, 2) or conf.shape != (traj.shape[0],):
            raise ShapeMismatch(f"{path}:{n}: trajectories {traj.shape} / confidences {conf.shape}")
        if not 1 <= len(conf) <= max_k:
            raise ShapeMismatch(f"{path}:{n}: {len(conf)} hypotheses, allowed 1..{max_k}")
        out[key] = (traj, conf)
    return out


def samples_from_scenes(scenes: Sequence[Scene], predictions: dict) -> list[EvaluationSample]:
    targets = {}
    for scene in scenes:
        for t in scene.targets:
            targets[(scene.scene_id, t.agent_id)] = (scene, t)
    for key in predictions:
        if key not in targets:
            raise UnknownTarget(f"prediction for {key[0]}/{key[1]} matches no prediction target")
    samples = []
    for key, (scene, track) in sorted(targets.items()):
        if track.future is None:
            continue
        if key not in predictions:
            raise MissingPrediction(f"no prediction for target {key[0]}/{key[1]}")
        traj, conf = predictions[key]
        fut = track.future_array
        cur = track.current
        others = [o.future_array for o in scene.tracks if o.agent_id != track.agent_id and o.future is not None]
        samples.append(
            EvaluationSample(
                trajectories=traj,
                confidences=conf,
                gt=fut[:, :2],
                valid=fut[:, 7] > 0,
                object_type=track.object_type,
                other_agents_future=others,
                extent=(cur.length, cur.width),
                start_xy=(cur.x, cur.y),
                start_heading=cur.heading,
                key=key,
            )
        )
    return samples


def evaluate(predictions_path: str | Path, scenes: Sequence[Scene], threshold: float = 2.0, config: Optional[dict] = None) -> MetricsReport:
    preds = read_predictions(predictions_path)
    return report_from_samples(samples_from_scenes(scenes, preds), threshold, config)
