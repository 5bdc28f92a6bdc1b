"""Deterministic serialization helpers shared by the compute modules and the CLI."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np


def _round17(x: float) -> float | str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.17g}")


def to_jsonable(obj: Any) -> Any:
    """Convert reports to plain JSON types; complex numbers become [re, im]."""
    if is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return to_jsonable({k: v for k, v in asdict(obj).items() if not k.startswith("_")})
    if hasattr(obj, "_asdict"):
        return to_jsonable(obj._asdict())
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, Fraction):
        return {"num": obj.numerator, "den": obj.denominator, "value": _round17(float(obj))}
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round17(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return [_round17(obj.real), _round17(obj.imag)]
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(dumps(obj))


def write_csv(path: str | Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, (float, np.floating)) else v for v in row])


def save_matrix(path: str | Path, M: np.ndarray, meta: dict | None = None) -> None:
    """Row-major little-endian float64 (re, im) pairs plus a JSON description."""
    path = Path(path)
    M = np.asarray(M, dtype=complex)
    buf = np.empty(M.size * 2, dtype="<f8")
    buf[0::2] = M.real.ravel(order="C")
    buf[1::2] = M.imag.ravel(order="C")
    path.write_bytes(buf.tobytes())
    desc = {"shape": list(M.shape), "dtype": "complex128-interleaved-le", **(meta or {})}
    Path(str(path) + ".json").write_text(dumps(desc))


def load_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    desc = json.loads(Path(str(path) + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    return (raw[0::2] + 1j * raw[1::2]).reshape(desc["shape"])
