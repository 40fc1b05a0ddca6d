"""De Broglie-Bohm trajectories guided by a sine-series state."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from . import _integrator, _kernels
from .errors import DomainError, NodeProximityError
from .quantum import QuantumState, psi_grid

__all__ = [
    "IntegratorSpec",
    "BohmTrajectory",
    "integrate_trajectory",
    "integrate_ensemble",
    "integrate_endpoints",
    "sample_from_density",
    "density_cell_masses",
]

_STATUS = {
    _integrator.STATUS_OK: "ok",
    _integrator.STATUS_NODE_STALL: "node_stall",
    _integrator.STATUS_MAX_STEPS: "max_steps",
    _integrator.STATUS_BAD_START: "rejected_start",
}


@dataclass(frozen=True)
class IntegratorSpec:
    """Settings of the adaptive Dormand-Prince integrator.

    ``h_init`` and ``h_min`` of ``None`` select automatic values: the first
    step from the initial speed and ``h_min = 1e-14 max(1, |t0|, |t1|)``.
    ``node_eta`` overrides the state's node threshold.

    ``control`` selects the step acceptance test.  ``"unit_step"`` (default)
    charges each step only its share of the span, so the endpoint error
    scales with the tolerance and halving the tolerance roughly halves it;
    ``"step"`` is the classic per-step test, several times cheaper but with
    an endpoint error that grows with the number of steps.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    h_init: float | None = None
    h_min: float | None = None
    node_eta: float | None = None
    max_steps: int = 100_000_000
    control: str = "unit_step"

    def __post_init__(self):
        if self.control not in ("unit_step", "step"):
            raise DomainError(f"control must be 'unit_step' or 'step', got {self.control!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("tolerances must be > 0")
        if self.h_init is not None and self.h_init <= 0:
            raise DomainError("h_init must be > 0")
        if self.h_min is not None and self.h_init is not None and not self.h_min < self.h_init:
            raise DomainError("h_min must be smaller than h_init")
        if self.max_steps < 1:
            raise DomainError("max_steps must be >= 1")

    def halved(self):
        return replace(self, rel_tol=self.rel_tol / 2, abs_tol=self.abs_tol / 2)


@dataclass
class BohmTrajectory:
    """Sampled trajectory with the guidance diagnostics at every sample.

    Attributes
    ----------
    t : ndarray (n,)
    x, v : ndarray (n, 2)
    R, Q : ndarray (n,)
        Density and quantum potential at the sampled points.
    initial : tuple
    stats : dict
        ``steps``, ``rejects`` and ``min_R`` encountered by the integrator.
    status : str
        ``"ok"``, ``"node_stall"``, ``"max_steps"`` or ``"rejected_start"``.
    raw_t, raw_x : ndarray
        Accepted adaptive steps.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    initial: tuple
    stats: dict
    status: str = "ok"
    message: str = ""
    raw_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    raw_x: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))

    @property
    def ok(self):
        return self.status == "ok"

    @property
    def points(self):
        """List of ``(t, x, v, R, Q)`` tuples."""
        return [(float(self.t[i]), tuple(self.x[i]), tuple(self.v[i]), float(self.R[i]), float(self.Q[i]))
                for i in range(self.t.size)]

    def __len__(self):
        return self.t.size


def _resolve(state: QuantumState, spec: IntegratorSpec, t0, t1):
    eta = state.node_eta if spec.node_eta is None else spec.node_eta
    h_min = 1e-14 * max(1.0, abs(t0), abs(t1)) if spec.h_min is None else spec.h_min
    h_init = 0.0 if spec.h_init is None else spec.h_init
    return eta, h_min, h_init


def _sample_grid(t0, t1, sample_times, sample_dt):
    if sample_times is not None:
        ts = np.asarray(sample_times, dtype=float)
        if ts.ndim != 1 or ts.size == 0 or np.any(np.diff(ts) <= 0) or ts[0] < t0:
            raise DomainError("sample_times must be strictly increasing and start at or after t0")
        return ts
    if not t1 > t0:
        raise DomainError("t1 must exceed t0")
    n = 512 if sample_dt is None else max(1, int(math.ceil((t1 - t0) / sample_dt - 1e-9)))
    return t0 + (t1 - t0) * np.arange(n + 1) / n


def integrate_trajectory(state: QuantumState, x_i, t0, t1, spec: IntegratorSpec | None = None,
                         sample_times=None, sample_dt=None, keep_raw=True) -> BohmTrajectory:
    """Integrate the guidance equation from ``x_i`` at ``t0`` to ``t1``.

    Positions are sampled by dense output at ``sample_times`` (default: 512
    uniform intervals, or spacing ``sample_dt``); velocity, density and
    quantum potential are evaluated at every sample.

    Raises
    ------
    DomainError
        If ``x_i`` is not strictly inside the box.
    NodeProximityError
        If the density at the start is below the node threshold.

    A step-size collapse near a node does not raise: the trajectory is
    returned truncated, with ``status == "node_stall"`` and a warning.
    """
    spec = IntegratorSpec() if spec is None else spec
    L = state.cfg.L
    x0, y0 = float(x_i[0]), float(x_i[1])
    if not state.cfg.contains(x0, y0, strict=True):
        raise DomainError(f"start {x_i!r} is not strictly inside the box")
    eta, h_min, h_init = _resolve(state, spec, t0, t1)
    ts = _sample_grid(t0, t1, sample_times, sample_dt)
    out = _integrator.integrate(
        state.A, state.B, *state.lead, L, state.omega, state.t_ref, state.cfg.hbar / state.cfg.m,
        x0, y0, float(t0), ts, spec.rel_tol, spec.abs_tol, h_init, h_min, eta,
        int(spec.max_steps), bool(keep_raw), spec.control == "unit_step")
    pos, n_done, status, steps, rejects, min_R, raw_t, raw_xy = out
    if status == _integrator.STATUS_BAD_START:
        raise NodeProximityError(f"start density {min_R:.3e} below node threshold {eta:.3e}", min_R, eta)
    traj = _assemble(state, ts[:n_done], pos[:n_done], (x0, y0), steps, rejects, min_R, status, raw_t, raw_xy)
    if not traj.ok:
        warnings.warn(f"trajectory from {traj.initial} stopped: {traj.message}", RuntimeWarning, stacklevel=2)
    return traj


def _assemble(state, ts, pos, initial, steps, rejects, min_R, status, raw_t, raw_xy):
    f = _integrator.sample_fields(state.A, state.B, *state.lead, state.cfg.L, state.omega, state.t_ref,
                                  state.cfg.hbar, state.cfg.m, ts, np.ascontiguousarray(pos))
    name = _STATUS[int(status)]
    msg = ""
    if name == "node_stall":
        msg = (f"step size fell below h_min near a node at t={ts[-1] if ts.size else float('nan'):.6g}; "
               f"min density {min_R:.3e}")
    elif name == "max_steps":
        msg = f"max_steps reached after {steps} steps"
    return BohmTrajectory(
        t=ts.copy(), x=pos.copy(), v=f[:, 1:3].copy(), R=f[:, 0].copy(), Q=f[:, 3].copy(),
        initial=initial, stats={"steps": int(steps), "rejects": int(rejects), "min_R": float(min_R)},
        status=name, message=msg, raw_t=raw_t.copy(), raw_x=raw_xy.copy())


def integrate_ensemble(state: QuantumState, x_list, t0, t1, spec: IntegratorSpec | None = None,
                       sample_times=None, sample_dt=None, keep_raw=False):
    """Integrate independent trajectories from every start in ``x_list``.

    Failures never abort the batch: a start outside the box or at a node
    gives a trajectory with ``status == "rejected_start"`` and no samples.
    """
    spec = IntegratorSpec() if spec is None else spec
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for x in x_list:
            try:
                out.append(integrate_trajectory(state, x, t0, t1, spec, sample_times, sample_dt, keep_raw))
            except (DomainError, NodeProximityError) as exc:
                out.append(BohmTrajectory(
                    t=np.empty(0), x=np.empty((0, 2)), v=np.empty((0, 2)), R=np.empty(0), Q=np.empty(0),
                    initial=tuple(float(c) for c in x), stats={"steps": 0, "rejects": 0, "min_R": float("nan")},
                    status="rejected_start", message=str(exc)))
    return out


def integrate_endpoints(state: QuantumState, starts, t0, t1, spec: IntegratorSpec | None = None):
    """Final positions only, for large ensembles.

    Uses the same compiled stepping routine as :func:`integrate_trajectory`,
    so endpoints agree bit for bit.  Returns ``(positions, status, stats)``
    where rows of failed trajectories hold NaN.
    """
    spec = IntegratorSpec() if spec is None else spec
    starts = np.ascontiguousarray(np.asarray(starts, dtype=float).reshape(-1, 2))
    eta, h_min, h_init = _resolve(state, spec, t0, t1)
    ts = np.array([float(t1)])
    pos, status, stats = _integrator.integrate_batch(
        state.A, state.B, *state.lead, state.cfg.L, state.omega, state.t_ref, state.cfg.hbar / state.cfg.m,
        starts, float(t0), ts, spec.rel_tol, spec.abs_tol, h_init, h_min, eta, int(spec.max_steps),
        spec.control == "unit_step")
    return pos[:, 0, :], np.array([_STATUS[int(s)] for s in status]), stats


def density_cell_masses(state: QuantumState, t, n_grid=512, oversample=2):
    """Probability of each cell of an ``n_grid``-square partition at time ``t``.

    Cell masses are composite-midpoint averages over ``oversample^2``
    sub-cells.
    """
    L = state.cfg.L
    m = n_grid * oversample
    c = (np.arange(m) + 0.5) * (L / m)
    R = np.abs(psi_grid(state, c, c, t)) ** 2
    R = R.reshape(n_grid, oversample, n_grid, oversample).mean(axis=(1, 3))
    return R * (L / n_grid) ** 2


def sample_from_density(state: QuantumState, t, n, seed, method="rejection", n_grid=512,
                        eta=None):
    """Draw ``n`` positions distributed as ``|psi(., t)|^2``.

    Parameters
    ----------
    method : {"rejection", "qmc"}
        ``"rejection"`` proposes from a piecewise-constant envelope built on
        an ``n_grid`` mesh and accepts against the exact density.  The mesh
        must resolve the interference fringes of the state; proposals where
        the density exceeds the envelope are counted and reported with a
        ``RuntimeWarning``.
        ``"qmc"`` maps a scrambled Sobol sequence through the inverse
        conditional CDFs of the cell masses (piecewise-uniform within
        cells); it has far smaller sampling noise for histogram tests.
    eta : float, optional
        Points with density below this threshold (default the node
        threshold) are rejected and redrawn.

    Returns
    -------
    ndarray, shape (n, 2)
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    L = state.cfg.L
    eta = state.node_eta if eta is None else eta
    rng = np.random.default_rng(seed)
    if method == "qmc":
        return _sample_qmc(state, t, n, seed, n_grid, eta)
    if method != "rejection":
        raise DomainError(f"unknown sampling method {method!r}")
    # envelope: corner maxima of each cell, padded
    g = np.linspace(0.0, L, n_grid + 1)
    Rg = np.abs(psi_grid(state, g, g, t)) ** 2
    corner = np.maximum.reduce([Rg[:-1, :-1], Rg[1:, :-1], Rg[:-1, 1:], Rg[1:, 1:]])
    env = 2.0 * corner + 1e-3 * Rg.max()
    if not np.any(env > 0) or not np.isfinite(env).all() or Rg.max() <= 0:
        raise DomainError("density grid is identically zero; cannot build an envelope")
    p = env.ravel() / env.sum()
    h = L / n_grid
    out = np.empty((0, 2))
    w = state.omega
    tau = t - state.t_ref
    violations = 0
    while out.shape[0] < n:
        batch = max(1024, 2 * (n - out.shape[0]))
        cells = rng.choice(p.size, size=batch, p=p)
        ix, iy = np.divmod(cells, n_grid)
        u = rng.random((batch, 3))
        xs = (ix + u[:, 0]) * h
        ys = (iy + u[:, 1]) * h
        inside = (xs > 0) & (xs < L) & (ys > 0) & (ys < L)
        xs, ys, ix, iy, acc_u = xs[inside], ys[inside], ix[inside], iy[inside], u[inside, 2]
        dens = _kernels.batch_density(state.A, state.B, *state.lead, L, w, tau, xs, ys)
        e = env[ix, iy]
        violations += int(np.sum(dens > e))
        keep = (acc_u * e < dens) & (dens >= eta)
        out = np.vstack([out, np.column_stack([xs[keep], ys[keep]])])
    if violations:
        warnings.warn(f"rejection envelope exceeded at {violations} proposals", RuntimeWarning, stacklevel=2)
    return out[:n]


def _sample_qmc(state, t, n, seed, n_grid, eta):
    L = state.cfg.L
    mass = density_cell_masses(state, t, n_grid)
    total = mass.sum()
    if not total > 0:
        raise DomainError("density grid is identically zero")
    col = mass.sum(axis=1)
    cdf_x = np.concatenate([[0.0], np.cumsum(col)]) / total
    # row-normalized conditional CDFs, row i shifted by i so that one sorted
    # array serves every row
    cum = np.cumsum(mass, axis=1)
    safe = np.where(cum[:, -1:] > 0, cum[:, -1:], 1.0)
    cond = np.where(cum[:, -1:] > 0, cum / safe, (np.arange(1, n_grid + 1) / n_grid)[None, :])
    flat = (cond + np.arange(n_grid)[:, None]).ravel()
    h = L / n_grid
    sob = qmc.Sobol(d=2, scramble=True, seed=seed)
    m = int(math.ceil(math.log2(max(n, 2))))
    out = np.empty((0, 2))
    w = state.omega
    tau = t - state.t_ref
    while out.shape[0] < n:
        u = sob.random_base2(m) if out.shape[0] == 0 else sob.random(n - out.shape[0])
        ix = np.clip(np.searchsorted(cdf_x, u[:, 0], side="right") - 1, 0, n_grid - 1)
        fx = (u[:, 0] - cdf_x[ix]) / np.where(col[ix] > 0, col[ix] / total, 1.0)
        xs = (ix + np.clip(fx, 0.0, 1.0)) * h
        k = np.searchsorted(flat, ix + u[:, 1], side="left")
        iy = np.clip(k - ix * n_grid, 0, n_grid - 1)
        lo = np.where(iy > 0, cond[ix, iy - 1], 0.0)
        width = cond[ix, iy] - lo
        fy = (u[:, 1] - lo) / np.where(width > 0, width, 1.0)
        ys = (iy + np.clip(fy, 0.0, 1.0)) * h
        ok = (xs > 0) & (xs < L) & (ys > 0) & (ys < L)
        dens = np.zeros(xs.size)
        dens[ok] = _kernels.batch_density(state.A, state.B, *state.lead, L, w, tau, xs[ok], ys[ok])
        ok &= dens >= eta
        out = np.vstack([out, np.column_stack([xs[ok], ys[ok]])])
    return out[:n]
