"""FNIRSET on-disk format: a JSON header beside a raw float32 binary.

The header is ``{"magic": "FNIRSET", "version": 1, "trials": N, "channels": C,
"timepoints": T, "labels": [...], "subjects": [...], "runs": [...]}``; the
binary holds N*C*T little-endian float32 values in (trial, channel, time)
row-major order.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .pipeline import TrialSet

MAGIC = "FNIRSET"
VERSION = 1
HEADER_NAME = "header.json"
DATA_NAME = "data.f32"


def save_fnirset(trials: TrialSet, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n, c, t = trials.data.shape
    header = {
        "magic": MAGIC,
        "version": VERSION,
        "trials": n,
        "channels": c,
        "timepoints": t,
        "labels": trials.labels.tolist(),
        "subjects": trials.subjects.tolist(),
        "runs": trials.runs.tolist(),
    }
    (out / HEADER_NAME).write_text(json.dumps(header))
    np.ascontiguousarray(trials.data, dtype="<f4").tofile(out / DATA_NAME)
    return out


def load_fnirset(path) -> TrialSet:
    path = Path(path)
    root = path if path.is_dir() else path.parent
    header = json.loads((root / HEADER_NAME).read_text())
    if header.get("magic") != MAGIC or header.get("version") != VERSION:
        raise ValueError(f"{root / HEADER_NAME}: not a version-{VERSION} {MAGIC} header")
    n, c, t = header["trials"], header["channels"], header["timepoints"]
    raw = np.fromfile(root / DATA_NAME, dtype="<f4")
    if raw.size != n * c * t:
        raise ValueError(f"{root / DATA_NAME}: expected {n * c * t} values, found {raw.size}")
    for key in ("labels", "subjects", "runs"):
        if len(header[key]) != n:
            raise ValueError(f"header field {key!r} has {len(header[key])} entries, expected {n}")
    return TrialSet(
        raw.reshape(n, c, t).astype(np.float64),
        np.asarray(header["labels"]),
        np.asarray(header["subjects"]),
        np.asarray(header["runs"]),
    )
