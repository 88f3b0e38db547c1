"""Checkpoint container: a JSON manifest plus one little-endian float blob.

Layout of a ``.ckpt`` file: a single line of compact UTF-8 JSON (the
manifest), a newline, then the raw blob. The manifest carries
``version: "congfu-ckpt/1"``, optional caller metadata, and one entry per
array with its name, shape, dtype and byte offset into the blob.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = "congfu-ckpt/1"

_DTYPES = {"float32": "<f4", "float64": "<f8"}


class CheckpointError(RuntimeError):
    """Raised when a checkpoint cannot be read or does not match."""


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float arrays to ``path`` in manifest+blob form."""
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype == np.float32:
            dtype = "float32"
        elif arr.dtype == np.float64:
            dtype = "float64"
        else:
            raise CheckpointError(f"array {name!r} has unsupported dtype {arr.dtype}")
        raw = np.ascontiguousarray(arr).astype(_DTYPES[dtype], copy=False).tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": dtype,
            "offset": offset,
        })
        chunks.append(raw)
        offset += len(raw)
    manifest = {"version": FORMAT_VERSION, "meta": meta or {}, "params": entries}
    with open(path, "wb") as fh:
        fh.write(json.dumps(manifest, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for chunk in chunks:
            fh.write(chunk)


def load_arrays(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint, returning (manifest, name -> array)."""
    with open(path, "rb") as fh:
        header = fh.readline()
        blob = fh.read()
    try:
        manifest = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint file ({exc})") from exc
    version = manifest.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version!r} (expected {FORMAT_VERSION})")
    arrays = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        dt = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * dt.itemsize
        if end > len(blob):
            raise CheckpointError(f"{path}: blob truncated at entry {entry['name']!r}")
        arr = np.frombuffer(blob[start:end], dtype=dt).reshape(shape)
        arrays[entry["name"]] = arr.astype(entry["dtype"])
    return manifest, arrays
