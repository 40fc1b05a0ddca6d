"""Run artifact formats.

Grid files (``.grid``) are a short ASCII header followed by raw
little-endian float64 values::

    SQBGRID 1
    nx 128
    ny 128
    extent 0 10 0 10
    units probability/length^2
    layout row-major, x index first
    time 0.5
    END

The header ends at the line ``END``; ``values[i, j]`` is the cell with x
index ``i``.  Small grids may also be exported as CSV with the same
orientation.  Trajectories are CSV with columns ``t, x, y, vx, vy, R, Q``.
"""
from __future__ import annotations

import json
import os

import numpy as np

from ..analysis import DensityGrid

GRID_MAGIC = "SQBGRID 1"
TRAJECTORY_COLUMNS = ("t", "x", "y", "vx", "vy", "R", "Q")


def write_grid(path, grid: DensityGrid, time=None, units="probability/length^2"):
    lines = [
        GRID_MAGIC,
        f"nx {grid.nx}",
        f"ny {grid.ny}",
        f"extent 0 {grid.L!r} 0 {grid.L!r}",
        f"units {units}",
        "layout row-major, x index first",
    ]
    if time is not None:
        lines.append(f"time {float(time)!r}")
    lines.append("END")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def read_grid(path):
    """Return ``(DensityGrid, header dict)``."""
    with open(path, "rb") as fh:
        blob = fh.read()
    end = blob.index(b"\nEND\n") + len(b"\nEND\n")
    header_lines = blob[:end].decode("ascii").splitlines()
    if header_lines[0] != GRID_MAGIC:
        raise ValueError(f"{path}: not a grid file")
    header = {}
    for line in header_lines[1:-1]:
        key, _, val = line.partition(" ")
        header[key] = val
    nx, ny = int(header["nx"]), int(header["ny"])
    L = float(header["extent"].split()[1])
    values = np.frombuffer(blob[end:], dtype="<f8").reshape(nx, ny).copy()
    return DensityGrid(values, L), header


def write_grid_csv(path, grid: DensityGrid):
    np.savetxt(path, grid.values, delimiter=",", fmt="%.17g")


def write_trajectory(path, traj):
    """CSV of the sampled trajectory (NaN rows are never written)."""
    data = np.column_stack([traj.t, traj.x[:, 0], traj.x[:, 1], traj.v[:, 0], traj.v[:, 1], traj.R, traj.Q])
    np.savetxt(path, data, delimiter=",", fmt="%.17g", header=",".join(TRAJECTORY_COLUMNS), comments="")


def read_trajectory(path):
    """Dict of column arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {c: data[:, i] for i, c in enumerate(TRAJECTORY_COLUMNS)}


def write_polyline(path, poly):
    np.savetxt(path, np.asarray(poly), delimiter=",", fmt="%.17g", header="x,y", comments="")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj):
    """Deterministic JSON: sorted keys, shortest round-trip floats."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
