"""Versioned binary container and run-manifest helpers.

Byte layout of a container file:

    bytes 0..7    magic b"MPDSTOR1"
    bytes 8..15   header length N, little-endian uint64
    bytes 16..16+N-1  UTF-8 JSON header:
        {"format": str, "version": int, "meta": {...},
         "arrays": [{"name": str, "dtype": str, "shape": [...]}, ...]}
    then each array's raw bytes in header order, C-contiguous,
    little-endian.

Writes go through an atomic rename so readers never observe a partial
file. Wall-clock information never enters containers, only manifests, so
artifact bytes are reproducible from seeds.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"MPDSTOR1"


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_container(path, fmt: str, version: int, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    header = json.dumps(
        {"format": fmt, "version": version, "meta": meta, "arrays": entries},
        sort_keys=True,
    ).encode("utf-8")
    payload = MAGIC + struct.pack("<Q", len(header)) + header + b"".join(blobs)
    _atomic_write(path, payload)


def read_container(path, expect_format: str | None = None, expect_version: int | None = None):
    """Returns (meta, arrays). Raises ValueError on format mismatch."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a container file (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    if expect_format is not None and header["format"] != expect_format:
        raise ValueError(f"{path}: format {header['format']!r}, expected {expect_format!r}")
    if expect_version is not None and header["version"] != expect_version:
        raise ValueError(f"{path}: version {header['version']}, expected {expect_version}")
    arrays = {}
    offset = 16 + hlen
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
        nbytes = dt.itemsize * count
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=offset).reshape(entry["shape"])
        arrays[entry["name"]] = arr.copy()
        offset += nbytes
    return header["meta"], arrays


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def output_root() -> Path:
    """Output root for relative artifact paths (MPDISTILL_OUTPUT_ROOT)."""
    return Path(os.environ.get("MPDISTILL_OUTPUT_ROOT", "."))


def resolve_out(path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else output_root() / p


def write_manifest(
    artifact_path,
    command: str,
    config: dict,
    seeds: dict,
    inputs: dict[str, str],
    wall_time_s: float,
) -> Path:
    """Write `<artifact>.manifest.json` tracing the artifact to its run.

    Inputs are recorded with content hashes so downstream manifests link
    upstream artifacts (e.g. a student checkpoint links its teacher).
    """
    import mpdistill

    artifact_path = Path(artifact_path)
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "version": mpdistill.__version__,
        "inputs": {
            str(name): {"path": str(p), "sha256": sha256_file(p)} for name, p in inputs.items()
        },
        "output": artifact_path.name,
        "wall_time_s": wall_time_s,
    }
    path = artifact_path.with_name(artifact_path.name + ".manifest.json")
    _atomic_write(path, json.dumps(manifest, sort_keys=True, indent=2).encode("utf-8"))
    return path


def read_manifest(artifact_path) -> dict:
    p = Path(str(artifact_path) + ".manifest.json")
    return json.loads(p.read_text())
