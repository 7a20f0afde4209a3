"""Bulk rasterization of scenes into a cache directory."""

from __future__ import annotations

import logging
import multiprocessing as mp
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from ..config import RasterConfig
from ..errors import BevMotionError, IoError
from ..scene import FUTURE_STEPS, Scene
from .cache import cache_filename, write_cache
from .core import local_future, rasterize

log = logging.getLogger(__name__)


def cache_scene(scene: Scene, out_dir: Path, config: RasterConfig, extra_meta: Optional[dict] = None):
    """Rasterize and cache every prediction target of one scene.

    Returns ``(written file names, [(scene_id, agent_id, error message), ...])``.
    """
    written, errors = [], []
    for track in scene.targets:
        try:
            raster = rasterize(scene, track.agent_id, config)
            gt, valid = local_future(scene, track.agent_id, raster.frame)
            name = cache_filename(scene.scene_id, track.agent_id)
            write_cache(raster, gt, out_dir / name, valid, FUTURE_STEPS, extra_meta)
            written.append(name)
        except BevMotionError as e:
            errors.append((scene.scene_id, track.agent_id, f"{type(e).__name__}: {e}"))
    return written, errors


def _job(args):
    return cache_scene(*args)


def rasterize_dataset(
    scenes: Sequence[Scene],
    out_dir: str | Path,
    parallelism: int = 1,
    config: Optional[RasterConfig] = None,
    extra_meta: Optional[dict] = None,
) -> dict:
    """Write one cache file per (scene, target) into ``out_dir``.

    Per-item failures are collected in ``summary["errors"]``; the batch keeps
    going. The output set does not depend on ``parallelism``.
    """
    config = config or RasterConfig()
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoError(f"cannot create {out_dir}: {e}") from None

    jobs = [(s, out_dir, config, extra_meta) for s in scenes]
    start = time.perf_counter()
    if parallelism <= 1 or len(jobs) <= 1:
        results = [_job(j) for j in jobs]
    else:
        ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
        chunk = max(1, len(jobs) // (parallelism * 8))
        with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as pool:
            results = list(pool.map(_job, jobs, chunksize=chunk))
    elapsed = time.perf_counter() - start

    files = sorted(name for written, _ in results for name in written)
    errors = [e for _, errs in results for e in errs]
    for sid, aid, msg in errors:
        log.warning("skipped %s/%s: %s", sid, aid, msg)
    return {
        "count": len(files),
        "seconds": elapsed,
        "images_per_sec": len(files) / elapsed if elapsed > 0 else float("inf"),
        "files": files,
        "errors": [{"scene_id": s, "agent_id": a, "error": m} for s, a, m in errors],
    }
