"""Self-describing checkpoint files for policy parameters.

A checkpoint is a ``.npz`` archive holding one array per parameter and per
buffer, plus a JSON manifest recording the architecture hyperparameters and
the expected name/shape of every array. Loading validates the manifest
against the arrays before anything is copied.
"""

from __future__ import annotations

import json

import numpy as np

from .nn import ParamStore

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable checkpoint or manifest/shape disagreement."""


def save_checkpoint(path, store: ParamStore, config: dict) -> None:
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "params": {name: list(v.shape) for name, v in store.values.items()},
        "buffers": {name: list(v.shape) for name, v in store.buffers.items()},
    }
    arrays = {"manifest": np.frombuffer(
        json.dumps(manifest, sort_keys=True).encode("utf-8"), dtype=np.uint8)}
    for name, v in store.values.items():
        arrays[f"param::{name}"] = v
    for name, v in store.buffers.items():
        arrays[f"buffer::{name}"] = v
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray],
                                   dict[str, np.ndarray]]:
    """Returns (config, params, buffers) after validating the manifest."""
    try:
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "manifest" not in arrays:
        raise CheckpointError(f"{path} has no manifest")
    try:
        manifest = json.loads(bytes(arrays["manifest"]).decode("utf-8"))
    except Exception as exc:
        raise CheckpointError(f"{path}: corrupt manifest: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version "
                              f"{manifest.get('format_version')}")
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for name, shape in manifest["params"].items():
        key = f"param::{name}"
        if key not in arrays:
            raise CheckpointError(f"{path}: missing array {name!r}")
        arr = arrays[key]
        if list(arr.shape) != shape:
            raise CheckpointError(f"{path}: shape mismatch for {name!r}: "
                                  f"manifest {shape}, array {list(arr.shape)}")
        params[name] = arr
    for name, shape in manifest["buffers"].items():
        key = f"buffer::{name}"
        if key not in arrays:
            raise CheckpointError(f"{path}: missing buffer {name!r}")
        arr = arrays[key]
        if list(arr.shape) != shape:
            raise CheckpointError(f"{path}: shape mismatch for buffer {name!r}")
        buffers[name] = arr
    return manifest["config"], params, buffers
