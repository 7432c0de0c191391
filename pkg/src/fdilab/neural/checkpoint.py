"""Checkpoint file: an ``.npz`` archive of named float64 arrays plus a JSON header.

The header (key ``__meta__``) records the format version, the parameter
names in order with their shapes, and any caller metadata.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ContractError

CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "shapes": [[name, list(arr.shape)] for name, arr in params.items()],
        "meta": meta or {},
    }
    arrays = {f"p{k}": np.asarray(arr, dtype=np.float64) for k, arr in enumerate(params.values())}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__meta__"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ContractError(f"{path}: unsupported checkpoint version {header.get('version')!r}")
        params = {}
        for k, (name, shape) in enumerate(header["shapes"]):
            arr = data[f"p{k}"]
            if list(arr.shape) != shape:
                raise ContractError(f"{path}: parameter {name} has shape {arr.shape}, header says {shape}")
            params[name] = arr.copy()
    return params, header["meta"]
