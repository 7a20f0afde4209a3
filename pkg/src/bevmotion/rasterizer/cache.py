"""Compressed NPZ cache of rasters.

Entries (NPY v1.0, little-endian):

``raster``        uint8   [C, H, W]
``gt_future``     float32 [T_f, 2]  local frame meters, omitted when unknown
``future_valid``  uint8   [T_f]
``frame``         float64 [6]       rotation, tx, ty, scale, anchor_u, anchor_v
``meta``          uint8   [n]       UTF-8 encoded JSON object

Archives are written with fixed zip timestamps and compression settings so
that identical inputs give identical bytes. Integrity is checked through the
per-entry zip CRC-32.
"""

from __future__ import annotations

import io
import json
import struct
import zipfile
import zlib
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import CorruptionError, FormatError, IoError
from ..transform import FrameTransform
from .core import Raster

FORMAT_VERSION = 1
_DOS_TIME, _DOS_DATE = 0, (1 << 5) | 1  # 1980-01-01 00:00:00
_COMPRESS_LEVEL = 1
_ZIP_MAGIC = b"PK\x03\x04"


def _npy_parts(arr: np.ndarray) -> tuple[bytes, bytes]:
    arr = np.ascontiguousarray(arr)
    head = io.BytesIO()
    np.lib.format.write_array_header_1_0(head, np.lib.format.header_data_from_array_1_0(arr))
    return head.getvalue(), arr.tobytes()


def write_npz(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Deterministic ``np.savez_compressed`` equivalent.

    Writes a plain (non-zip64) archive by hand: fixed 1980-01-01 timestamps,
    deflate with the RLE strategy, which is fast on mostly-zero masks and
    still readable by any zip/NPZ reader.
    """
    body = bytearray()
    central = bytearray()
    for name, arr in arrays.items():
        fname = f"{name}.npy".encode()
        head, data = _npy_parts(arr)
        comp = zlib.compressobj(_COMPRESS_LEVEL, zlib.DEFLATED, -15, 8, zlib.Z_RLE)
        payload = comp.compress(head) + comp.compress(data) + comp.flush()
        crc = zlib.crc32(data, zlib.crc32(head))
        usize = len(head) + len(data)
        fields = struct.pack("<HHHHHIII", 20, 0, 8, _DOS_TIME, _DOS_DATE, crc, len(payload), usize)
        offset = len(body)
        body += struct.pack("<I", 0x04034B50) + fields + struct.pack("<HH", len(fname), 0) + fname + payload
        central += (
            struct.pack("<IH", 0x02014B50, 0x031E)
            + fields
            + struct.pack("<HHHHHII", len(fname), 0, 0, 0, 0, 0o100644 << 16, offset)
            + fname
        )
    eocd = struct.pack("<IHHHHIIH", 0x06054B50, 0, 0, len(arrays), len(arrays), len(central), len(body), 0)
    try:
        Path(path).write_bytes(bytes(body + central + eocd))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from None


def read_npz(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise IoError(f"cannot read {path}: {e}") from None
    if raw[:4] != _ZIP_MAGIC:
        raise FormatError(f"{path}: not an NPZ archive (bad magic {raw[:4]!r})")
    out = {}
    try:
        with zipfile.ZipFile(io.BytesIO(raw)) as zf:
            for name in zf.namelist():
                if not name.endswith(".npy"):
                    raise FormatError(f"{path}: unexpected entry {name!r}")
                with zf.open(name) as fh:
                    blob = fh.read()
                try:
                    out[name[:-4]] = np.lib.format.read_array(io.BytesIO(blob), allow_pickle=False)
                except ValueError as e:
                    raise FormatError(f"{path}: bad NPY header in {name!r}: {e}") from None
    except (zipfile.BadZipFile, zlib.error, EOFError) as e:
        raise CorruptionError(f"{path}: damaged archive: {e}") from None
    return out


def write_cache(
    raster: Raster,
    gt_future: Optional[np.ndarray],
    path: str | Path,
    future_valid: Optional[np.ndarray] = None,
    future_steps: int = 80,
    extra_meta: Optional[dict] = None,
) -> None:
    """Write ``raster`` and its local-frame future to ``path``.

    With ``gt_future=None`` the ``gt_future`` entry is omitted and
    ``future_valid`` is all zeros.
    """
    data = np.ascontiguousarray(raster.data, dtype=np.uint8)
    if gt_future is not None:
        gt = np.asarray(gt_future, dtype=np.float32).reshape(-1, 2)
        valid = np.ones(len(gt), np.uint8) if future_valid is None else np.asarray(future_valid).astype(np.uint8)
        if valid.shape != (len(gt),):
            raise ValueError(f"future_valid shape {valid.shape} does not match gt_future {gt.shape}")
    else:
        gt = None
        valid = np.zeros(future_steps, np.uint8)

    meta = dict(raster.meta)
    meta.update(extra_meta or {})
    meta.update(
        format_version=FORMAT_VERSION,
        scene_id=raster.scene_id,
        agent_id=raster.agent_id,
        has_future=gt is not None,
    )
    arrays = {"raster": data}
    if gt is not None:
        arrays["gt_future"] = gt
    arrays["future_valid"] = valid
    arrays["frame"] = raster.frame.as_array()
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    write_npz(path, arrays)


def read_cache(path: str | Path, history_steps: Optional[int] = 11):
    """Inverse of :func:`write_cache`: ``(raster, gt_future or None, future_valid)``.

    ``history_steps`` fixes the expected channel count ``3 + 2*history_steps``;
    pass ``None`` to accept any count.
    """
    entries = read_npz(path)
    for name in ("raster", "future_valid", "frame", "meta"):
        if name not in entries:
            raise FormatError(f"{path}: missing entry {name!r}")
    data = entries["raster"]
    if data.dtype != np.uint8 or data.ndim != 3:
        raise FormatError(f"{path}: raster must be uint8 [C,H,W], got {data.dtype} {data.shape}")
    if history_steps is not None and data.shape[0] != 3 + 2 * history_steps:
        raise FormatError(f"{path}: raster has {data.shape[0]} channels, expected {3 + 2 * history_steps}")
    try:
        meta = json.loads(entries["meta"].tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: unreadable meta: {e}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format_version {meta.get('format_version')!r}")
    if entries["frame"].shape != (6,):
        raise CorruptionError(f"{path}: frame has shape {entries['frame'].shape}, expected (6,)")

    valid = entries["future_valid"].astype(bool)
    gt = entries.get("gt_future")
    if meta.get("has_future") != (gt is not None):
        raise CorruptionError(f"{path}: has_future flag disagrees with gt_future entry")
    if gt is not None and gt.shape != (len(valid), 2):
        raise CorruptionError(f"{path}: gt_future shape {gt.shape} vs future_valid {valid.shape}")

    raster = Raster(data, meta["scene_id"], meta["agent_id"], FrameTransform.from_array(entries["frame"]), meta)
    return raster, gt, valid


def cache_filename(scene_id: str, agent_id: str) -> str:
    return f"{scene_id}__{agent_id}.npz"
