"""Command line front end: generate -> rasterize -> train -> predict -> evaluate, plus render.

Every command prints the resolved configuration to stderr at startup and
records it in its outputs: inside NPZ and PNG files directly, and in a
``<file>.meta.json`` sidecar for JSON lines, CSV and scene directories.
Failures print one JSON line ``{"error", "type", "exit_code"}`` to stderr and
exit with 1 (usage), 2 (I/O), 3 (validation) or 4 (numeric).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import Config, load_config
from .errors import BevMotionError, IoError, NumericError, UsageError, ValidationError
from .loss import MixtureOutput
from .metrics import evaluate, read_predictions
from .plotting import plot_report, plot_training_log
from .predictor import load_checkpoint, predict_scene, train
from .rasterizer import rasterize, rasterize_dataset, read_cache, render_png
from .scene import META_SUFFIX, load_scene, load_scene_dir, save_scene
from .synth import ScenarioSpec, generate

log = logging.getLogger("bevmotion")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which is reserved for I/O
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file mirroring the Config structure")
    p.add_argument("--seed", type=int, help="seed for every random choice")
    p.add_argument("--jobs", type=int, default=1, help="rasterization worker processes")
    p.add_argument("--scale", type=float, help="raster meters per pixel")
    p.add_argument("--k", type=int, help="number of trajectory hypotheses")
    p.add_argument("--miss-threshold", type=float, help="miss distance in meters")
    p.add_argument("--out", type=Path, help="output path (file, directory or prefix; see command help)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _add_common(common)
    parser = _Parser(prog="bevmotion", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bevmotion {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write synthetic scene JSON files into --out DIR")
    g.add_argument("--kind", default="TIntersection", choices=["TIntersection", "StraightRoad"])
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--branch-probability", type=float, default=0.5)
    g.add_argument("--speed-range", type=float, nargs=2, default=(8.0, 12.0), metavar=("MIN", "MAX"))
    g.add_argument("--junction-range", type=float, nargs=2, default=(18.0, 26.0), metavar=("MIN", "MAX"))
    g.add_argument("--noise", type=float, default=0.1, help="position jitter sigma, meters")
    g.add_argument("--max-others", type=int, default=3)

    r = sub.add_parser("rasterize", parents=[common], help="cache rasters of every target into --out DIR")
    r.add_argument("scenes", type=Path, help="scene directory")

    t = sub.add_parser("train", parents=[common], help="train from a cache directory; --out is the checkpoint .npz")
    t.add_argument("cache", type=Path)
    t.add_argument("--iterations", type=int)

    p = sub.add_parser("predict", parents=[common], help="write world-frame predictions as JSON lines to --out")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("scenes", type=Path)

    e = sub.add_parser("evaluate", parents=[common], help="write --out PREFIX.{json,csv,png}")
    e.add_argument("predictions", type=Path)
    e.add_argument("scenes", type=Path)

    d = sub.add_parser("render", parents=[common], help="render a raster to a PNG at --out")
    d.add_argument("source", type=Path, help="cache .npz file, or scene .json together with --target")
    d.add_argument("--target", help="agent id when SOURCE is a scene file")
    d.add_argument("--overlay", type=Path, help="predictions JSON lines to draw on top")
    return parser


def resolve_config(args) -> Config:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["training"] = {"seed": args.seed}
    if args.scale is not None:
        overrides["raster"] = {"scale": args.scale}
    if args.k is not None:
        overrides["model"] = {"k": args.k}
    if args.miss_threshold is not None:
        overrides["metrics"] = {"miss_threshold": args.miss_threshold}
    if getattr(args, "iterations", None) is not None:
        overrides.setdefault("training", {})["iterations"] = args.iterations
    cfg = load_config(args.config, overrides)
    if cfg.raster.scale <= 0 or cfg.model.k < 1 or cfg.metrics.miss_threshold < 0:
        raise UsageError("scale must be > 0, k >= 1 and miss threshold >= 0")
    if args.jobs < 1:
        raise UsageError(f"--jobs must be >= 1, got {args.jobs}")
    return cfg


def _require_out(args) -> Path:
    if args.out is None:
        raise UsageError(f"{args.command} needs --out")
    return args.out


def _require_exists(*paths: Path) -> None:
    for p in paths:
        if not p.exists():
            raise IoError(f"{p} does not exist")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_sidecar(path: Path, meta: dict) -> Path:
    side = path.with_name(path.name + META_SUFFIX)
    try:
        side.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {side}: {e}") from None
    return side


def _mkdir(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {path}: {e}") from None


# ---------------------------------------------------------------------------


def cmd_generate(args, cfg: Config, meta: dict) -> int:
    out = _require_out(args)
    spec = ScenarioSpec(
        kind=args.kind,
        branch_probability=args.branch_probability,
        speed_range=tuple(args.speed_range),
        junction_range=tuple(args.junction_range),
        noise_sigma=args.noise,
        count=args.count,
        seed=cfg.seed,
        max_others=args.max_others,
    )
    scenes = generate(spec)
    _mkdir(out)
    for s in scenes:
        save_scene(s, out / f"{s.scene_id}.json")
    spec_dict = {**spec.__dict__, "kind": spec.kind.value}
    write_sidecar(out / "scenes", {**meta, "scenario": spec_dict, "count": len(scenes)})
    print(_dump({"command": "generate", "scenes": len(scenes), "out": str(out)}))
    return 0


def cmd_rasterize(args, cfg: Config, meta: dict) -> int:
    out = _require_out(args)
    _require_exists(args.scenes)
    scenes = load_scene_dir(args.scenes)
    summary = rasterize_dataset(scenes, out, args.jobs, cfg.raster, extra_meta=meta)
    write_sidecar(out / "cache", {**meta, "count": summary["count"], "files": summary["files"], "errors": summary["errors"]})
    print(
        _dump(
            {
                "command": "rasterize",
                "rasters": summary["count"],
                "errors": len(summary["errors"]),
                "seconds": round(summary["seconds"], 3),
                "rasters_per_sec": round(summary["images_per_sec"], 1),
                "jobs": args.jobs,
            }
        )
    )
    return 0


def cmd_train(args, cfg: Config, meta: dict) -> int:
    out = _require_out(args)
    _require_exists(args.cache)
    log_csv = out.with_suffix(".log.csv")
    result = train(args.cache, cfg, out, log_csv)
    write_sidecar(log_csv, meta)
    plot_training_log(result.rows, out.with_suffix(".loss.png"))
    last = result.rows[-1]
    print(
        _dump(
            {
                "command": "train",
                "checkpoint": str(out),
                "best_iteration": result.best_iteration,
                "best_val_loss": result.best_val_loss,
                "final_train_loss": last["train_loss"],
            }
        )
    )
    return 0


def cmd_predict(args, cfg: Config, meta: dict) -> int:
    out = _require_out(args)
    _require_exists(args.checkpoint, args.scenes)
    params, ck_meta = load_checkpoint(args.checkpoint)
    # the raster geometry must match what the model was trained on
    raster_cfg = Config.from_dict({"raster": ck_meta["config"]["raster"]}).raster if "config" in ck_meta else cfg.raster
    scenes = load_scene_dir(args.scenes)
    lines = []
    for scene in scenes:
        for rec in predict_scene(params, scene, raster_cfg):
            if not all(math.isfinite(v) for v in np.ravel(rec["trajectories"])):
                raise NumericError(f"non-finite prediction for {rec['scene_id']}/{rec['agent_id']}")
            lines.append(_dump(rec))
    try:
        out.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot write {out}: {e}") from None
    write_sidecar(out, {**meta, "checkpoint": str(args.checkpoint), "checkpoint_iteration": ck_meta.get("iteration")})
    print(_dump({"command": "predict", "predictions": len(lines), "out": str(out)}))
    return 0


def cmd_evaluate(args, cfg: Config, meta: dict) -> int:
    out = _require_out(args)
    _require_exists(args.predictions, args.scenes)
    report = evaluate(args.predictions, load_scene_dir(args.scenes), cfg.metrics.miss_threshold, meta)
    stem = out.with_suffix("") if out.suffix in (".json", ".csv", ".png") else out
    if stem.parent != Path("."):
        _mkdir(stem.parent)
    report.write_json(stem.with_suffix(".json"))
    csv_path = stem.with_suffix(".csv")
    report.write_csv(csv_path)
    write_sidecar(csv_path, meta)
    plot_report(report, stem.with_suffix(".png"))
    sys.stdout.write(csv_path.read_text(encoding="utf-8"))
    return 0


def _overlay_for(raster, predictions_path: Path) -> Optional[MixtureOutput]:
    preds = read_predictions(predictions_path)
    key = (raster.scene_id, raster.agent_id)
    if key not in preds:
        raise ValidationError(f"{predictions_path} has no prediction for {key[0]}/{key[1]}")
    traj, conf = preds[key]
    local = raster.frame.world_to_local(traj)
    with np.errstate(divide="ignore"):
        logits = np.log(np.clip(conf, 1e-300, None))
    return MixtureOutput(local, logits)


def cmd_render(args, cfg: Config, meta: dict) -> int:
    out = _require_out(args)
    _require_exists(args.source)
    if args.source.suffix == ".npz":
        raster, _, _ = read_cache(args.source, cfg.raster.history_steps)
    else:
        if args.target is None:
            raise UsageError("render from a scene file needs --target")
        raster = rasterize(load_scene(args.source), args.target, cfg.raster)
    overlay = None
    if args.overlay is not None:
        _require_exists(args.overlay)
        overlay = _overlay_for(raster, args.overlay)
    render_png(raster, overlay, out, meta)
    print(_dump({"command": "render", "out": str(out), "hypotheses": 0 if overlay is None else overlay.k}))
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "rasterize": cmd_rasterize,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "render": cmd_render,
}


def _fail(err: BaseException, code: int) -> int:
    sys.stderr.write(_dump({"error": str(err), "type": type(err).__name__, "exit_code": code}) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        meta = {"config": cfg.to_dict(), "seed": cfg.seed, "version": __version__, "command": args.command}
        sys.stderr.write("config: " + _dump(cfg.to_dict()) + "\n")
        return COMMANDS[args.command](args, cfg, meta)
    except BevMotionError as e:
        return _fail(e, e.exit_code)
    except OSError as e:
        return _fail(IoError(str(e)), IoError.exit_code)


if __name__ == "__main__":
    sys.exit(main())
