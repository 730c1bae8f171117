"""Atomic output helpers."""
import json
import math
import os
from pathlib import Path

import numpy as np


def _partial(path: Path) -> Path:
    return path.with_name(path.name + ".partial")


def atomic_write_text(path, text: str):
    path = Path(path)
    tmp = _partial(path)
    tmp.write_text(text)
    os.replace(tmp, path)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        # JSON has no inf/nan
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, record: dict):
    atomic_write_text(path, json.dumps(_clean(record), indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.9e}" if isinstance(v, float) else str(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")
