"""Checkpoint container: a JSON manifest plus a float64 parameter blob.

Layout of a checkpoint file:

    8 bytes  little-endian uint64, byte length of the manifest
    N bytes  UTF-8 JSON manifest
    rest     parameter values, little-endian float64, row-major, in the
             order declared by manifest["params"]

The manifest carries the architecture hyperparameters needed to rebuild the
model and the name/shape of every parameter block. Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


class CheckpointError(ValueError):
    """Malformed or inconsistent checkpoint file."""


_MAGIC_VERSION = 1


def save_checkpoint(
    path: str | Path,
    kind: str,
    hyper: dict,
    named_params: list[tuple[str, np.ndarray]],
) -> None:
    manifest = {
        "version": _MAGIC_VERSION,
        "kind": kind,
        "hyper": hyper,
        "params": [
            {"name": name, "shape": list(arr.shape)} for name, arr in named_params
        ],
    }
    header = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for _, arr in named_params:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    """Returns (kind, hyper, {param name: array})."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise CheckpointError(f"{path}: too short to be a checkpoint")
    (header_len,) = struct.unpack("<Q", raw[:8])
    if len(raw) < 8 + header_len:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad manifest: {exc}") from exc
    if manifest.get("version") != _MAGIC_VERSION:
        raise CheckpointError(f"{path}: unsupported version {manifest.get('version')}")
    blob = raw[8 + header_len :]
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: blob truncated at {entry['name']}")
        arr = np.frombuffer(blob[offset:end], dtype="<f8").astype(np.float64)
        params[entry["name"]] = arr.reshape(shape)
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes in blob")
    return manifest["kind"], manifest["hyper"], params
