"""
Model checkpoints: a directory holding ``manifest.json`` and one NPY file
per array.

The manifest records the model kind and constructor config, its spaces,
every parameter's name, shape and file, the seeds used, and any extra
arrays (Polyak averages, persistent chains). It is written with sorted keys
and no timestamps, so equal models give byte-identical checkpoints.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .datasets import DatasetError, load_npy, save_npy
from .models import MODEL_KINDS

__all__ = ["CheckpointError", "Checkpoint", "save_checkpoint",
           "load_checkpoint", "MANIFEST"]

MANIFEST = "manifest.json"
FORMAT = "modlearn-checkpoint"
VERSION = 1


class CheckpointError(RuntimeError):
    """A checkpoint is missing, malformed or inconsistent with its
    manifest."""


@dataclass
class Checkpoint:
    model: object
    manifest: dict
    averaged: dict = field(default_factory=dict)
    state: dict = field(default_factory=dict)


def _write_arrays(path, subdir, arrays: dict) -> list:
    entries = []
    if arrays:
        os.makedirs(os.path.join(path, subdir), exist_ok=True)
    for name in sorted(arrays):
        value = np.asarray(arrays[name], dtype=np.float64)
        rel = f"{subdir}/{name}.npy"
        save_npy(os.path.join(path, rel), value)
        entries.append({"name": name, "shape": list(value.shape),
                        "file": rel})
    return entries


def save_checkpoint(path, model, seeds: dict | None = None,
                    averaged: dict | None = None,
                    state: dict | None = None) -> None:
    """Write ``model`` to directory ``path`` (created if needed).

    Any I/O failure propagates as :class:`CheckpointError`.
    """
    try:
        os.makedirs(path, exist_ok=True)
        params = model.get_params()
        manifest = {
            "format": FORMAT,
            "version": VERSION,
            "kind": model.kind,
            "config": model.get_config(),
            "input_space": model.input_space.to_dict(),
            "output_space": (None if model.output_space is None
                             else model.output_space.to_dict()),
            "seeds": dict(seeds or {}),
            "params": [_write_arrays(path, "params", {n: params[n]})[0]
                       for n in params],
            "averaged": _write_arrays(path, "averaged", averaged or {}),
            "state": _write_arrays(path, "state", state or {}),
        }
        text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
        with open(os.path.join(path, MANIFEST), "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint to {path}: {exc}") \
            from exc


def read_manifest(path) -> dict:
    file = os.path.join(path, MANIFEST)
    try:
        with open(file, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise CheckpointError(f"{path} is not a checkpoint: no {MANIFEST}") \
            from None
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest {file}: {exc}") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise CheckpointError(f"{file} is not a {FORMAT} manifest")
    for key in ("kind", "config", "params"):
        if key not in manifest:
            raise CheckpointError(f"manifest {file} lacks {key!r}")
    if manifest["kind"] not in MODEL_KINDS:
        raise CheckpointError(f"unknown model kind {manifest['kind']!r}")
    return manifest


def _read_arrays(path, entries) -> dict:
    out = {}
    for entry in entries:
        try:
            name, shape, rel = entry["name"], tuple(entry["shape"]), \
                entry["file"]
        except (KeyError, TypeError):
            raise CheckpointError(f"malformed manifest entry {entry!r}") \
                from None
        try:
            value = load_npy(os.path.join(path, rel))
        except (OSError, DatasetError, ValueError) as exc:
            raise CheckpointError(f"cannot read {rel}: {exc}") from None
        if value.shape != shape:
            raise CheckpointError(f"integrity error: {rel} has shape "
                                  f"{value.shape} but the manifest says "
                                  f"{shape}")
        out[name] = value
    return out


def load_checkpoint(path) -> Checkpoint:
    manifest = read_manifest(path)
    params = _read_arrays(path, manifest["params"])
    try:
        model = MODEL_KINDS[manifest["kind"]].from_config(manifest["config"])
    except (TypeError, ValueError, KeyError) as exc:
        raise CheckpointError(f"cannot rebuild model from manifest: {exc}") \
            from None
    expected = {n: v.shape for n, v in model.get_params().items()}
    got = {n: v.shape for n, v in params.items()}
    if expected != got:
        raise CheckpointError(f"integrity error: model expects parameters "
                              f"{expected}, checkpoint has {got}")
    model.set_params(params)
    return Checkpoint(model, manifest,
                      _read_arrays(path, manifest.get("averaged", [])),
                      _read_arrays(path, manifest.get("state", [])))
