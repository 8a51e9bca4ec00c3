"""JSON helpers for numpy arrays (real and complex)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def array_to_json(a) -> dict:
    a = np.asarray(a)
    if np.iscomplexobj(a):
        return {"shape": list(a.shape), "real": a.real.ravel().tolist(), "imag": a.imag.ravel().tolist()}
    return {"shape": list(a.shape), "real": a.ravel().tolist()}


def array_from_json(d: dict) -> np.ndarray:
    shape = tuple(d["shape"])
    re = np.asarray(d["real"], dtype=float)
    if "imag" in d:
        return (re + 1j * np.asarray(d["imag"], dtype=float)).reshape(shape)
    return re.reshape(shape)


def dump(obj, path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=1))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
