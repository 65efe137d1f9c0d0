"""Checkpoint directory format: manifest.json plus one little-endian
float64 binary per parameter."""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .autodiff import Tensor

FORMAT_VERSION = 1
_SAFE = re.compile(r"[^A-Za-z0-9._-]")


def _filename(name: str) -> str:
    return _SAFE.sub("_", name) + ".bin"


def save_checkpoint(params: dict[str, Tensor], directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    seen = set()
    for name, p in params.items():
        fname = _filename(name)
        if fname in seen:
            raise ValueError(f"parameter name collision after sanitizing: {name}")
        seen.add(fname)
        p.data.astype("<f8").tofile(directory / fname)
        entries.append({"name": name, "shape": list(p.data.shape), "file": fname})
    manifest = {"format_version": FORMAT_VERSION, "dtype": "f64", "params": entries}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return directory


def load_checkpoint(directory) -> dict[str, np.ndarray]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("dtype") != "f64":
        raise ValueError(f"unsupported checkpoint dtype: {manifest.get('dtype')}")
    out: dict[str, np.ndarray] = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        arr = np.fromfile(directory / entry["file"], dtype="<f8")
        expected = int(np.prod(shape)) if shape else 1
        if arr.size != expected:
            raise ValueError(
                f"checkpoint file {entry['file']} holds {arr.size} values, expected {expected}"
            )
        out[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return out


def restore_params(params: dict[str, Tensor], values: dict[str, np.ndarray]) -> None:
    missing = sorted(set(params) - set(values))
    extra = sorted(set(values) - set(params))
    if missing or extra:
        raise ValueError(f"checkpoint/model mismatch: missing={missing} extra={extra}")
    for name, p in params.items():
        if values[name].shape != p.data.shape:
            raise ValueError(
                f"parameter '{name}' shape {p.data.shape} != checkpoint {values[name].shape}"
            )
        p.data = values[name].copy()
        p.grad = None
