"""Checkpoint serialization.

A checkpoint is a JSON document holding named float64 parameter tensors
(base64 of little-endian bytes, so round-trips are bit-exact), the effective
run configuration text, run coordinates (cohort, seed, hashes), and a SHA-256
integrity digest over the parameter payload. Training snapshots extend the
same format with optimizer moments, the carried perspective state, and RNG
stream states so an interrupted run resumes bit-exactly.
"""

from __future__ import annotations

import base64
import hashlib
import json
from typing import Any, Dict, List, Tuple

import numpy as np


class CheckpointError(ValueError):
    """Unreadable, mismatched, or corrupted checkpoint."""


def _encode_array(arr: np.ndarray) -> Dict[str, Any]:
    a = np.ascontiguousarray(arr, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(obj: Dict[str, Any]) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return arr.reshape(obj["shape"]).copy()


def _payload_digest(params: Dict[str, Dict[str, Any]]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode("utf-8"))
        h.update(params[name]["data"].encode("ascii"))
    return h.hexdigest()


def save_checkpoint(path: str, named_params: List[Tuple[str, np.ndarray]],
                    config_text: str, meta: Dict[str, Any],
                    extra: Dict[str, Any] | None = None) -> None:
    params = {name: _encode_array(arr) for name, arr in named_params}
    doc: Dict[str, Any] = {
        "format": "somagrid-checkpoint-v1",
        "meta": meta,
        "config_text": config_text,
        "params": params,
        "payload_sha256": _payload_digest(params),
    }
    if extra:
        doc["extra"] = extra
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    import os

    os.replace(tmp, path)


def load_checkpoint(path: str) -> Dict[str, Any]:
    """Load and integrity-check a checkpoint; params come back as arrays."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != "somagrid-checkpoint-v1":
        raise CheckpointError(f"checkpoint {path} has unknown format {doc.get('format')!r}")
    params_enc = doc.get("params", {})
    digest = _payload_digest(params_enc)
    if digest != doc.get("payload_sha256"):
        raise CheckpointError(f"checkpoint {path} failed integrity check")
    doc["params"] = {name: _decode_array(obj) for name, obj in params_enc.items()}
    return doc


def encode_array(arr: np.ndarray) -> Dict[str, Any]:
    return _encode_array(arr)


def decode_array(obj: Dict[str, Any]) -> np.ndarray:
    return _decode_array(obj)
