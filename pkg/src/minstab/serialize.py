"""File formats: correspondence CSV/JSON and scene JSON.

CSV schema: header ``x1,y1,x2,y2``, one correspondence per row, floats
printed with 17 significant digits (lossless round trip). JSON formats:
correspondences as an array of 4-tuples; calibrated scenes as
``{"R": [9 row-major], "t": [3], "points": [[x,y,z], ...]}``; projective
scenes as ``{"b": [7], "chart_id": k, "points": ...}``.
"""

import json
import os

import numpy as np

from .errors import InvalidInput
from .scene import CalibratedScene, CorrespondenceSet, ProjectiveScene

CSV_HEADER = "x1,y1,x2,y2"


def _fmt(v):
    return format(float(v), ".17g")


def correspondences_to_csv(c):
    lines = [CSV_HEADER]
    for g, gbar in zip(c.x, c.xbar):
        lines.append(",".join(_fmt(v) for v in (g[0], g[1], gbar[0], gbar[1])))
    return "\n".join(lines) + "\n"


def correspondences_from_csv(text, unit="normalized"):
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not lines or [f.strip() for f in lines[0].split(",")] != CSV_HEADER.split(","):
        raise InvalidInput(f"CSV must start with header '{CSV_HEADER}'")
    rows = []
    for ln in lines[1:]:
        fields = ln.split(",")
        if len(fields) != 4:
            raise InvalidInput(f"expected 4 fields per row, got {len(fields)}: {ln!r}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as e:
            raise InvalidInput(f"non-numeric CSV field in {ln!r}") from e
    if not rows:
        raise InvalidInput("CSV contains no correspondences")
    arr = np.asarray(rows)
    return CorrespondenceSet(arr[:, :2], arr[:, 2:], unit=unit)


def correspondences_to_json(c):
    tuples = [[g[0], g[1], gb[0], gb[1]] for g, gb in zip(c.x, c.xbar)]
    return json.dumps(tuples)


def correspondences_from_json(payload, unit="normalized"):
    tuples = json.loads(payload) if isinstance(payload, str) else payload
    if not isinstance(tuples, list) or not tuples:
        raise InvalidInput("expected a non-empty JSON array of 4-tuples")
    arr = np.asarray(tuples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise InvalidInput("each entry must be a 4-tuple (x1, y1, x2, y2)")
    return CorrespondenceSet(arr[:, :2], arr[:, 2:], unit=unit)


def scene_to_dict(s):
    if isinstance(s, CalibratedScene):
        return {
            "R": [float(v) for v in s.R.ravel()],
            "t": [float(v) for v in s.t_hat],
            "points": [[float(v) for v in p] for p in s.points],
        }
    if isinstance(s, ProjectiveScene):
        return {
            "b": [float(v) for v in s.b],
            "chart_id": int(s.chart_id),
            "points": [[float(v) for v in p] for p in s.points],
        }
    raise InvalidInput(f"cannot serialize object of type {type(s).__name__}")


def scene_from_dict(d):
    if not isinstance(d, dict):
        raise InvalidInput("scene JSON must be an object")
    if "R" in d:
        try:
            R = np.asarray(d["R"], dtype=float).reshape(3, 3)
            return CalibratedScene(R, d["t"], d["points"])
        except (KeyError, ValueError) as e:
            raise InvalidInput(f"malformed calibrated scene: {e}") from e
    if "b" in d:
        try:
            return ProjectiveScene(d["b"], d.get("chart_id", 6), d["points"])
        except (KeyError, ValueError) as e:
            raise InvalidInput(f"malformed projective scene: {e}") from e
    raise InvalidInput("scene JSON must contain either 'R'/'t' or 'b'/'chart_id'")


def write_scene(path, s):
    with open(path, "w") as f:
        json.dump(scene_to_dict(s), f, indent=2)
        f.write("\n")


def read_scene(path):
    with open(path) as f:
        return scene_from_dict(json.load(f))


def write_correspondences(path, c):
    """Write CSV or JSON depending on the file extension (default CSV)."""
    ext = os.path.splitext(str(path))[1].lower()
    text = correspondences_to_json(c) + "\n" if ext == ".json" else correspondences_to_csv(c)
    with open(path, "w") as f:
        f.write(text)


def read_correspondences(path, unit="normalized"):
    with open(path) as f:
        text = f.read()
    stripped = text.lstrip()
    if stripped.startswith("["):
        return correspondences_from_json(stripped, unit=unit)
    return correspondences_from_csv(text, unit=unit)
