"""Versioned .npz checkpoint container.

One file holds every parameter blob (named by layer) plus a JSON metadata
entry carrying {kind, version, config, dataset stats, train-time metrics}.
float64 blobs round-trip bit-exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, kind: str, config: dict, params: dict,
                    stats: dict | None = None, metrics: dict | None = None) -> None:
    arrays = {}
    for name, p in params.items():
        arr = p.data if hasattr(p, "data") else np.asarray(p)
        arrays[f"param/{name}"] = np.asarray(arr, dtype=np.float64)
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "stats": stats,
        "metrics": metrics or {},
        "param_names": sorted(params),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path, expect_kind: str | None = None):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z:
            raise CheckpointError(f"{path} is not a checkpoint (no metadata)")
        meta = json.loads(str(z["__meta__"][()]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format {meta.get('format_version')}")
        if expect_kind is not None and meta.get("kind") != expect_kind:
            raise CheckpointError(
                f"expected a '{expect_kind}' checkpoint, got '{meta.get('kind')}'")
        params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    missing = set(meta["param_names"]) - set(params)
    if missing:
        raise CheckpointError(f"checkpoint missing parameters: {sorted(missing)}")
    return meta, params
