"""File formats: T3D1 tensors, system directories, CSV slices, PGM frames, YAML configs.

T3D1 layout (little endian)::

    b"T3D1"  u64 n1  u64 n2  u64 n3  f64[n1*n2*n3]   (row-major, index (i, j, k))
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ShapeError
from .solvers import FactorizedSystem
from .tensor import as_tensor

__all__ = [
    "write_t3d1",
    "read_t3d1",
    "write_system",
    "read_system",
    "write_csv_slice",
    "read_csv_slice",
    "write_pgm",
    "read_pgm",
    "write_frames",
    "read_frames",
    "load_config",
    "write_json",
]

MAGIC = b"T3D1"
_HEADER = struct.Struct("<4sQQQ")


def write_t3d1(path, a: np.ndarray) -> None:
    a = as_tensor(a)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *a.shape))
        fh.write(a.astype("<f8").tobytes(order="C"))


def read_t3d1(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ShapeError(f"{path}: truncated T3D1 header")
    magic, n1, n2, n3 = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ShapeError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    count = n1 * n2 * n3
    body = raw[_HEADER.size:]
    if len(body) != 8 * count:
        raise ShapeError(f"{path}: expected {count} values for dims ({n1}, {n2}, {n3}), got {len(body) // 8}")
    return as_tensor(np.frombuffer(body, dtype="<f8").astype(np.float64), (n1, n2, n3))


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


_SYSTEM_FILES = ("U", "V", "Y", "Z_dag", "X_dag", "X_min")


def write_system(out_dir, sys: FactorizedSystem, extra: dict | None = None) -> Path:
    """Write each tensor as ``<name>.t3d1`` plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in _SYSTEM_FILES:
        a = getattr(sys, name)
        if a is not None:
            write_t3d1(out / f"{name}.t3d1", a)
            files[name] = f"{name}.t3d1"
    manifest = {
        "format": "tkaczmarz-system/1",
        "files": files,
        "dims": sys.dims,
        "consistent": sys.consistent,
        "meta": sys.meta,
    }
    if extra:
        manifest.update(extra)
    write_json(out / "manifest.json", manifest)
    return out


def read_system(path) -> FactorizedSystem:
    d = Path(path)
    mf = d / "manifest.json"
    if not mf.exists():
        raise ConfigError(f"{d} has no manifest.json")
    manifest = json.loads(mf.read_text())
    files = manifest.get("files", {})
    for req in ("U", "V", "Y"):
        if req not in files:
            raise ConfigError(f"manifest lists no {req} tensor")
    arrays = {k: read_t3d1(d / v) for k, v in files.items() if k in _SYSTEM_FILES}
    return FactorizedSystem(consistent=manifest.get("consistent"), meta=manifest.get("meta", {}), **arrays)


def write_csv_slice(path, a: np.ndarray) -> None:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"CSV slices are 2-D, got shape {a.shape}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in a:
            w.writerow([repr(float(v)) for v in row])


def read_csv_slice(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ShapeError(f"{path}: ragged or empty CSV")
    a = np.array(rows)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{path}: non-finite entries")
    return a


def write_pgm(path, img: np.ndarray) -> None:
    """8-bit binary PGM; ``img`` is in [0, 1] and is clipped then rounded."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ShapeError(f"PGM frames are 2-D, got shape {img.shape}")
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _pgm_tokens(raw: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(raw, 4)
    if magic != b"P5":
        raise ShapeError(f"{path}: only binary PGM (P5) is supported")
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise ShapeError(f"{path}: bad maxval {maxval}")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    data = np.frombuffer(raw, dtype=dtype, count=w * h, offset=pos)
    return data.reshape(h, w).astype(np.float64) / maxval


def write_frames(out_dir, frames: np.ndarray, prefix: str = "frame") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for f in range(frames.shape[2]):
        p = out / f"{prefix}_{f:04d}.pgm"
        write_pgm(p, frames[:, :, f])
        paths.append(p)
    return paths


def read_frames(src) -> np.ndarray:
    """Frames from a directory of PGM files (sorted by name) or a T3D1 tensor."""
    src = Path(src)
    if src.is_file():
        return read_t3d1(src)
    files = sorted(src.glob("*.pgm"))
    if not files:
        raise ConfigError(f"no .pgm frames in {src}")
    imgs = [read_pgm(f) for f in files]
    if len({im.shape for im in imgs}) != 1:
        raise ShapeError("frames differ in size")
    return np.stack(imgs, axis=2)


def load_config(path) -> dict:
    """YAML mapping; an empty file is an empty config."""
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return doc
