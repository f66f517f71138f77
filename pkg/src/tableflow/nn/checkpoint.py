"""Versioned JSON checkpoints: parameter path -> shape + flat values.

Python's repr-based float serialization is shortest-roundtrip, so a
save/load cycle reproduces every double bit for bit.
"""
import json

import numpy as np

FORMAT_VERSION = 1


def save_checkpoint(path, params, extras=None):
    """params: dict name -> ndarray; extras: JSON-serializable metadata."""
    payload = {
        "version": FORMAT_VERSION,
        "params": {
            name: {"shape": list(arr.shape), "data": np.asarray(arr, dtype=np.float64).ravel().tolist()}
            for name, arr in params.items()
        },
        "extras": extras or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, separators=(",", ":"))


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    params = {}
    for name, entry in payload["params"].items():
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        params[name] = arr
    return params, payload.get("extras", {})
