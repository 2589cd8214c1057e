"""CSV and JSON output with a hashed manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import os

import numpy as np


def grid_csv(path, grid, values, t=None):
    """Write node coordinates and row-major ``re/im`` matrix entries.

    Header: ``x1,x2[,t],re_0_0,im_0_0,...``.  ``values`` has shape
    ``(*grid.N, n, n)``.
    """
    values = np.asarray(values, dtype=complex)
    n = values.shape[-1]
    header = [f"x{k + 1}" for k in range(grid.r)]
    if t is not None:
        header.append("t")
    for i in range(n):
        for j in range(n):
            header += [f"re_{i}_{j}", f"im_{i}_{j}"]
    pts = grid.points.reshape(-1, grid.r)
    flat = values.reshape(-1, n * n)
    entries = np.empty((flat.shape[0], 2 * n * n))
    entries[:, 0::2] = flat.real
    entries[:, 1::2] = flat.imag
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p, e in zip(pts, entries):
            row = [repr(float(x)) for x in p]
            if t is not None:
                row.append(repr(float(t)))
            w.writerow(row + [repr(float(x)) for x in e])


def read_grid_csv(path):
    """Read a grid CSV back as ``(header, coords, matrices)``."""
    with open(path) as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array(rows[1:], dtype=float)
    ncoord = sum(1 for h in header if not h.startswith(("re_", "im_")))
    ent = data[:, ncoord:]
    n = int(round(np.sqrt(ent.shape[1] / 2)))
    mats = (ent[:, 0::2] + 1j * ent[:, 1::2]).reshape(-1, n, n)
    return header, data[:, :ncoord], mats


def series_csv(path, columns):
    """Write named equal-length columns."""
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([repr(float(x)) for x in row])


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, data):
    """Deterministic JSON: sorted keys, fixed float formatting."""
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True)
        fh.write("\n")


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, files, volatile=()):
    """List ``files`` (relative to ``out_dir``) with hashes; ``volatile`` ones unhashed."""
    entries = []
    for name in sorted(files):
        entry = {"file": name, "bytes": os.path.getsize(os.path.join(out_dir, name))}
        if name in volatile:
            entry["volatile"] = True
        else:
            entry["sha256"] = sha256(os.path.join(out_dir, name))
        entries.append(entry)
    path = os.path.join(out_dir, "manifest.json")
    write_json(path, {"files": entries})
    return path
