"""Reading channel matrices and intensity profiles from files and strings."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .channel import ChannelError, ChannelMatrix


def read_channel(path) -> ChannelMatrix:
    """Load ``H`` from CSV (one row per receiver) or JSON (``{"H": [[...]]}`` or a bare list)."""
    path = Path(path)
    if not path.is_file():
        raise ChannelError(f"no such channel file: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ChannelError(f"malformed JSON in {path}: {exc}") from None
        rows = data.get("H") if isinstance(data, dict) else data
    else:
        rows = [r for r in csv.reader(text.splitlines()) if r and any(c.strip() for c in r)]
    try:
        H = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except (TypeError, ValueError):
        raise ChannelError(f"malformed channel matrix in {path}") from None
    if H.ndim != 2 or H.size == 0:
        raise ChannelError(f"channel matrix in {path} is not a non-empty rectangle")
    return ChannelMatrix(H)


def write_channel(path, H) -> None:
    H = getattr(H, "H", H)
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps({"H": np.asarray(H).tolist()}))
    else:
        with path.open("w", newline="") as fh:
            csv.writer(fh).writerows([[f"{v:.17g}" for v in row] for row in np.asarray(H)])


def parse_alpha(text: str) -> np.ndarray:
    """Comma- or space-separated ratios, e.g. ``"0.9,0.2"``."""
    try:
        vals = [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ChannelError(f"cannot parse alpha {text!r}") from None
    if not vals:
        raise ChannelError("alpha is empty")
    return np.array(vals)


def jsonable(obj):
    """Convert numpy containers and non-finite floats for ``json.dumps``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isfinite(x):
            return float(f"{x:.9g}")
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
