"""Raw binary array container: row-major bytes plus a JSON sidecar.

A matrix named ``x`` lives in ``x.f32`` (or ``x.f64``) with sidecar ``x.json``
holding ``{"shape": [...], "dtype": "f32", "order": "row-major"}``. The format
is language-neutral and bit-exact, which the determinism and checkpoint
round-trip guarantees rely on.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_DTYPES = {"f32": np.float32, "f64": np.float64}
_CODES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


class ArrayFormatError(Exception):
    pass


def write_array(base: Path | str, arr: np.ndarray, dtype: str = "f32") -> Path:
    """Write ``arr`` as ``<base>.<dtype>`` + ``<base>.json``; returns the binary path."""
    if dtype not in _DTYPES:
        raise ArrayFormatError(f"unsupported dtype code {dtype!r}")
    base = Path(base)
    data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype])
    bin_path = base.with_suffix(f".{dtype}")
    bin_path.write_bytes(data.tobytes(order="C"))
    sidecar = {"shape": list(data.shape), "dtype": dtype, "order": "row-major"}
    base.with_suffix(".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")
    return bin_path


def read_array(path: Path | str) -> np.ndarray:
    """Read an array given its binary path (sidecar found by extension swap)."""
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    if not path.exists():
        raise FileNotFoundError(str(path))
    if not sidecar_path.exists():
        raise ArrayFormatError(f"missing sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    code = meta.get("dtype")
    if code not in _DTYPES:
        raise ArrayFormatError(f"{sidecar_path}: unknown dtype {code!r}")
    if meta.get("order", "row-major") != "row-major":
        raise ArrayFormatError(f"{sidecar_path}: unsupported order {meta.get('order')!r}")
    shape = tuple(int(s) for s in meta["shape"])
    raw = np.frombuffer(path.read_bytes(), dtype=_DTYPES[code])
    expected = int(np.prod(shape)) if shape else 1
    if raw.size != expected:
        raise ArrayFormatError(f"{path}: payload has {raw.size} values, sidecar says {expected}")
    return raw.reshape(shape).copy()
