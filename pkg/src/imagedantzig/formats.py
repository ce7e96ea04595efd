"""Readers and writers for the command-line file formats.

* images CSV: ``sample_id,t_index,s_index,value`` (long format), with a
  ``grid.json`` sidecar holding ``m1, m2, t0, s0, delta1, delta2`` and an
  optional ``mask`` path;
* mask CSV: ``t_index,s_index,included`` (1 or 0);
* responses CSV: ``sample_id,y``;
* surface CSV: ``t,s,beta_raw,beta_truncated``.

Floats are written with ``repr`` so that values round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import os
from collections import OrderedDict

import numpy as np

from .bases import GridSpec

__all__ = [
    "fmt",
    "write_images",
    "read_images",
    "write_grid",
    "read_grid",
    "write_mask",
    "read_mask",
    "write_responses",
    "read_responses",
    "write_surface",
    "read_surface",
    "write_json",
    "write_rows",
]


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(c if isinstance(c, str) else fmt(c) for c in row) + "\n")


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_images(path, images, ids=None) -> None:
    """``images`` is ``(n, m1, m2)``."""
    images = np.asarray(images, dtype=float)
    n, m1, m2 = images.shape
    ids = [str(i) for i in range(n)] if ids is None else [str(i) for i in ids]
    tk = [str(k) for k in range(m1)]
    sl = [str(l) for l in range(m2)]
    with open(path, "w", newline="") as fh:
        fh.write("sample_id,t_index,s_index,value\n")
        for i in range(n):
            img = images[i]
            lines = [f"{ids[i]},{tk[k]},{sl[l]},{float(img[k, l])!r}"
                     for k in range(m1) for l in range(m2)]
            fh.write("\n".join(lines) + "\n")


def read_images(path, grid: GridSpec):
    """Returns ``(ids, images)`` with images shaped ``(n, m1, m2)``.

    Samples keep their order of first appearance; every cell must be given.
    """
    data = OrderedDict()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["sample_id", "t_index", "s_index", "value"]:
            raise ValueError(f"{path}: unexpected images header {header}")
        for row in reader:
            if not row:
                continue
            sid, k, l, v = row
            img = data.get(sid)
            if img is None:
                img = data[sid] = np.full(grid.shape, np.nan)
            img[int(k), int(l)] = float(v)
    images = np.stack(list(data.values())) if data else np.zeros((0,) + grid.shape)
    if np.isnan(images).any():
        raise ValueError(f"{path}: some samples do not cover the whole grid")
    return list(data.keys()), images


def write_grid(path, grid: GridSpec, mask_path: str | None = None) -> None:
    d = grid.to_dict()
    if mask_path is not None:
        d["mask"] = mask_path
    write_json(path, d)


def read_grid(path):
    """Returns ``(grid, mask)``; ``mask`` is None when no mask file is named."""
    with open(path) as fh:
        d = json.load(fh)
    grid = GridSpec.from_dict(d)
    mask = None
    if d.get("mask"):
        mpath = d["mask"]
        if not os.path.isabs(mpath):
            mpath = os.path.join(os.path.dirname(os.path.abspath(path)), mpath)
        mask = read_mask(mpath, grid)
    return grid, mask


def write_mask(path, mask) -> None:
    mask = np.asarray(mask, dtype=bool)
    rows = [(k, l, int(mask[k, l])) for k in range(mask.shape[0])
            for l in range(mask.shape[1])]
    write_rows(path, ["t_index", "s_index", "included"], rows)


def read_mask(path, grid: GridSpec) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            mask[int(row["t_index"]), int(row["s_index"])] = int(row["included"]) != 0
    return mask


def write_responses(path, y, ids=None) -> None:
    y = np.asarray(y, dtype=float).ravel()
    ids = [str(i) for i in range(len(y))] if ids is None else ids
    write_rows(path, ["sample_id", "y"], zip(ids, y))


def read_responses(path, ids=None) -> np.ndarray:
    """Responses, reordered to match ``ids`` when given."""
    vals = OrderedDict()
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals[row["sample_id"]] = float(row["y"])
    if ids is None:
        return np.array(list(vals.values()))
    try:
        return np.array([vals[str(i)] for i in ids])
    except KeyError as err:
        raise ValueError(f"{path}: no response for sample {err.args[0]}") from None


def write_surface(path, grid: GridSpec, raw, truncated) -> None:
    pts = grid.points
    rows = zip(pts[:, 0], pts[:, 1], np.ravel(raw), np.ravel(truncated))
    write_rows(path, ["t", "s", "beta_raw", "beta_truncated"], rows)


def read_surface(path):
    """Returns ``(points, raw, truncated)`` in file order."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, :2], arr[:, 2], arr[:, 3]
