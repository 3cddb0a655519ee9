"""Checkpoint format: one ``.npz`` archive per model.

Every named parameter array is stored under its own key; a ``__meta__``
entry holds a JSON string with the model kind, shape-defining settings and
provenance (config hash, seed). Loading validates that metadata is present
and returns ``(params, meta)`` with plain float64 arrays.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(path, params: dict, meta: dict) -> None:
    """Write named arrays plus a JSON metadata blob."""
    payload = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    meta = dict(meta, format_version=FORMAT_VERSION)
    payload["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **payload)


def load_checkpoint(path) -> tuple[dict, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path) as archive:
        if "__meta__" not in archive:
            raise ValueError(f"{path}: not a model checkpoint (missing metadata)")
        meta = json.loads(archive["__meta__"].tobytes().decode())
        params = {k: archive[k].astype(np.float64) for k in archive.files if k != "__meta__"}
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
    return params, meta
