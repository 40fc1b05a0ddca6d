"""Density grids and the metrics used to compare them and trajectories."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial.distance import directed_hausdorff

from .errors import DomainError
from .geometry import BilliardConfig

__all__ = [
    "DensityGrid",
    "grid_from_field",
    "l1_distance",
    "gaussian_smooth",
    "resample_polyline",
    "hausdorff_distance",
    "near_returns",
    "wall_standoff_series",
    "speed_per_segment",
]


@dataclass(frozen=True)
class DensityGrid:
    """Cell values of a density on the uniform ``nx x ny`` partition of
    ``[0, L]^2``.  ``values[i, j]`` belongs to the cell with x index ``i``."""

    values: np.ndarray
    L: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or min(v.shape) < 1:
            raise DomainError("grid values must be a 2D array")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("density values must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values, L):
        return cls(np.asarray(values, dtype=float), float(L))

    @property
    def nx(self):
        return self.values.shape[0]

    @property
    def ny(self):
        return self.values.shape[1]

    @property
    def extent(self):
        return (0.0, self.L, 0.0, self.L)

    @property
    def cell_area(self):
        return (self.L / self.nx) * (self.L / self.ny)

    @property
    def mass(self):
        return float(self.values.sum() * self.cell_area)

    def centers(self):
        """Cell-centre coordinates along x and y."""
        hx, hy = self.L / self.nx, self.L / self.ny
        return (np.arange(self.nx) + 0.5) * hx, (np.arange(self.ny) + 0.5) * hy

    def normalized(self):
        m = self.mass
        if m <= 0:
            raise DomainError("cannot normalize a grid with zero mass")
        return DensityGrid(self.values / m, self.L)


def grid_from_field(f, nx, ny, cfg: BilliardConfig, oversample=1):
    """Sample a density on cell centres.

    Parameters
    ----------
    f : callable
        ``f(X, Y)`` evaluated on broadcast coordinate arrays.
    nx, ny : int
        Number of cells per axis.
    oversample : int
        With ``s > 1`` every cell value is the mean over an ``s x s`` grid of
        sub-cell midpoints (composite midpoint rule), i.e. an estimate of the
        cell average rather than the centre value.

    The recorded mass is whatever the sampling gives; it is not rescaled.
    """
    if nx < 2 or ny < 2:
        raise DomainError("need at least 2 cells per axis")
    s = int(oversample)
    if s < 1:
        raise DomainError("oversample must be >= 1")
    xs = (np.arange(nx * s) + 0.5) * (cfg.L / (nx * s))
    ys = (np.arange(ny * s) + 0.5) * (cfg.L / (ny * s))
    vals = np.asarray(f(xs[:, None], ys[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (nx * s, ny * s))
    if np.any(vals < 0):
        raise DomainError(f"density function returned negative value {vals.min():.3e}")
    vals = vals.reshape(nx, s, ny, s).mean(axis=(1, 3))
    return DensityGrid(vals, cfg.L)


def _check_same(a: DensityGrid, b: DensityGrid):
    if a.values.shape != b.values.shape or a.L != b.L:
        raise DomainError(f"grid mismatch: {a.values.shape} on L={a.L} vs {b.values.shape} on L={b.L}")


def l1_distance(a: DensityGrid, b: DensityGrid) -> float:
    """``sum |a - b| * cell_area`` after normalizing both grids to unit mass."""
    _check_same(a, b)
    an, bn = a.normalized(), b.normalized()
    return float(np.abs(an.values - bn.values).sum() * a.cell_area)


def gaussian_smooth(g: DensityGrid, sigma) -> DensityGrid:
    """Convolve with a Gaussian of width ``sigma`` truncated at 4 sigma.

    The walls reflect (half-sample symmetric extension), so mass leaving the
    box is folded back and the total is preserved.
    """
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    if sigma == 0:
        return DensityGrid(g.values.copy(), g.L)
    s = (sigma * g.nx / g.L, sigma * g.ny / g.L)
    out = gaussian_filter(g.values, sigma=s, mode="reflect", truncate=4.0)
    return DensityGrid(np.clip(out, 0.0, None), g.L)


def resample_polyline(path, step):
    """Points along a polyline with spacing at most ``step``; vertices kept."""
    p = np.asarray(path, dtype=float)
    if p.ndim != 2 or p.shape[0] == 0:
        raise DomainError("polyline must be a nonempty (n, 2) array")
    if p.shape[0] == 1:
        return p.copy()
    seg = np.diff(p, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    pieces = [p[:1]]
    for i in range(len(seg)):
        k = max(1, int(math.ceil(lens[i] / step)))
        f = np.arange(1, k + 1)[:, None] / k
        pieces.append(p[i] + f * seg[i])
    return np.vstack(pieces)


def _as_pieces(path):
    if isinstance(path, (list, tuple)) and path and np.ndim(path[0]) == 2:
        return [np.asarray(q, dtype=float) for q in path]
    return [np.asarray(path, dtype=float)]


def hausdorff_distance(path_a, path_b, step=0.01):
    """Symmetric Hausdorff distance between two polylines.

    Either argument may be a list of polylines, taken as their union.
    Polylines are resampled with spacing ``step`` (default ``0.01``, i.e.
    ``L/1000`` for ``L = 10``).
    """
    pa = _as_pieces(path_a)
    pb = _as_pieces(path_b)
    if not pa or not pb or any(q.size == 0 for q in pa + pb):
        raise DomainError("empty polyline")
    a = np.vstack([resample_polyline(q, step) for q in pa])
    b = np.vstack([resample_polyline(q, step) for q in pb])
    return max(directed_hausdorff(a, b, seed=0)[0], directed_hausdorff(b, a, seed=0)[0])


def _traj_arrays(traj):
    if hasattr(traj, "t") and hasattr(traj, "x"):
        return np.asarray(traj.t, dtype=float), np.asarray(traj.x, dtype=float)
    t, x = traj
    return np.asarray(t, dtype=float), np.asarray(x, dtype=float)


def near_returns(traj, x_ref, radius, min_separation=None):
    """Times of local minima of ``|x(t) - x_ref|`` that fall below ``radius``.

    Parameters
    ----------
    traj : BohmTrajectory or (t, x) pair
    x_ref : position
    radius : float
    min_separation : float, optional
        Minima closer than this in time are merged, keeping the deepest one
        (callers pass ``T_PO / 4``).

    The time of each minimum is refined by a parabola through the three
    neighbouring samples.
    """
    if radius <= 0:
        raise DomainError("radius must be > 0")
    t, x = _traj_arrays(traj)
    r = np.hypot(x[:, 0] - x_ref[0], x[:, 1] - x_ref[1])
    if r.size < 3:
        return []
    cand = []
    for i in range(r.size):
        left = r[i - 1] if i > 0 else np.inf
        right = r[i + 1] if i + 1 < r.size else np.inf
        if r[i] < radius and r[i] < left and r[i] <= right:
            cand.append(i)
    found = []
    for i in cand:
        ti = t[i]
        if 0 < i < r.size - 1:
            denom = r[i - 1] - 2.0 * r[i] + r[i + 1]
            if denom > 0:
                shift = 0.5 * (r[i - 1] - r[i + 1]) / denom
                ti = t[i] + shift * 0.5 * (t[i + 1] - t[i - 1])
        found.append((ti, r[i]))
    if min_separation:
        merged = []
        for ti, ri in found:
            if merged and ti - merged[-1][0] < min_separation:
                if ri < merged[-1][1]:
                    merged[-1] = (ti, ri)
                continue
            merged.append((ti, ri))
        found = merged
    return [float(ti) for ti, _ in found]


def wall_standoff_series(traj, cfg: BilliardConfig, radius=None, min_separation=None, x_ref=None):
    """Minimum wall distance per traversal.

    The trajectory is cut at its near-returns to ``x_ref`` (default: its
    initial point) within ``radius`` (default ``0.05 L``); the segments are
    the traversals.  Returns a list of ``(index, distance)``.
    """
    t, x = _traj_arrays(traj)
    if t.size < 3:
        raise DomainError("trajectory too short to segment")
    radius = 0.05 * cfg.L if radius is None else radius
    x_ref = x[0] if x_ref is None else x_ref
    cuts = [c for c in near_returns((t, x), x_ref, radius, min_separation) if t[0] < c < t[-1]]
    wall = np.minimum(np.minimum(x[:, 0], cfg.L - x[:, 0]), np.minimum(x[:, 1], cfg.L - x[:, 1]))
    edges = [t[0]] + cuts + [t[-1]]
    out = []
    for k in range(len(edges) - 1):
        lo, hi = edges[k], edges[k + 1]
        sel = (t >= lo) & (t <= hi) if k == len(edges) - 2 else (t >= lo) & (t < hi)
        if np.any(sel):
            out.append((k, float(wall[sel].min())))
    return out


def speed_per_segment(traj, edges):
    """Mean speed (path length over duration) between consecutive ``edges``."""
    t, x = _traj_arrays(traj)
    out = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (t >= lo - 1e-12 * abs(hi)) & (t <= hi + 1e-12 * abs(hi))
        seg = x[sel]
        length = float(np.hypot(*np.diff(seg, axis=0).T).sum()) if seg.shape[0] > 1 else 0.0
        out.append(length / (hi - lo))
    return out
