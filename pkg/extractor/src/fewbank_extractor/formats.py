"""Writers for the engine's wire formats (MKEB banks, MKSC scores, manifest).

Implemented against the published format, not against the engine's code: this
package talks to the engine through files only.

MKEB (little-endian): "MKEB", version u32=1, rows u64, dim u32, label flag u8,
3 zero bytes, rows*dim float32 row-major, then rows*u32 labels if flagged.
MKSC: "MKSC", version u32=1, rows u64, rows*float32.
Manifest: UTF-8 JSON {class_names, shots, seed, banks{name: relative path}}.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_MKEB_HEADER = struct.Struct("<4sIQIB3s")
_MKSC_HEADER = struct.Struct("<4sIQ")


def write_bank(path, features: np.ndarray, labels=None) -> None:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.size == 0:
        raise ValueError(f"bank must be a non-empty matrix, got {features.shape}")
    if not np.all(np.isfinite(features)):
        raise ValueError("bank features must be finite")
    rows, dim = features.shape
    flag = 0 if labels is None else 1
    with open(path, "wb") as fh:
        fh.write(_MKEB_HEADER.pack(b"MKEB", 1, rows, dim, flag, b"\0\0\0"))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())
        if flag:
            labels = np.asarray(labels)
            if labels.shape != (rows,) or labels.min() < 0:
                raise ValueError("labels must be one non-negative index per row")
            fh.write(np.ascontiguousarray(labels, dtype="<u4").tobytes())


def write_scores(path, scores: np.ndarray) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    with open(path, "wb") as fh:
        fh.write(_MKSC_HEADER.pack(b"MKSC", 1, scores.shape[0]))
        fh.write(np.ascontiguousarray(scores, dtype="<f4").tobytes())


def write_manifest(path, class_names: list[str], shots: int, seed: int,
                   banks: dict[str, str]) -> None:
    payload = {
        "class_names": list(class_names),
        "shots": int(shots),
        "seed": int(seed),
        "banks": dict(banks),
    }
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
