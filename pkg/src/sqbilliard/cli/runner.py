"""Scenario execution and artifact writing."""
from __future__ import annotations

import os
import platform

import numba
import numpy as np
import scipy
import yaml

from .. import __version__
from ..analysis import (
    DensityGrid,
    gaussian_smooth,
    grid_from_field,
    hausdorff_distance,
    l1_distance,
    near_returns,
    speed_per_segment,
    wall_standoff_series,
)
from ..bohmian import IntegratorSpec, integrate_trajectory
from ..classical import (
    classical_density_boxed,
    orbit_polyline,
    propagate_arrays,
    return_period,
    sample_ensemble,
)
from ..errors import DomainError, NodeProximityError, TruncationError
from ..quantum import moments, project, psi_grid
from . import artifacts, plots
from .config import CONFIG_DIALECT, Scenario, check_physical

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


def _versions():
    return {
        "sqbilliard": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "pyyaml": yaml.__version__,
        "python": platform.python_version(),
    }


def _mixture(scn: Scenario):
    specs = scn.packet_specs()
    w = np.array([abs(s.weight) ** 2 for s in specs])
    return specs, w / w.sum()


def classical_grid(scn: Scenario, t):
    """Analytic boxed density of the packet mixture on the scenario grid."""
    cfg = scn.cfg
    specs, w = _mixture(scn)

    def f(X, Y):
        return sum(wk * classical_density_boxed((X, Y), t, s.params, cfg) for wk, s in zip(w, specs))

    return grid_from_field(f, scn.grid.nx, scn.grid.ny, cfg, scn.grid.oversample)


def quantum_grid(scn: Scenario, state, t):
    def f(X, Y):
        return np.abs(psi_grid(state, X[:, 0], Y[0, :], t)) ** 2

    return grid_from_field(f, scn.grid.nx, scn.grid.ny, scn.cfg, scn.grid.oversample)


def classical_samples(scn: Scenario):
    """Initial phase-space samples of the mixture, split deterministically
    between packets and seeded by independent child streams."""
    specs, w = _mixture(scn)
    n = scn.classical.samples
    counts = np.floor(w * n).astype(int)
    counts[-1] = n - counts[:-1].sum()
    children = np.random.SeedSequence(scn.seed).spawn(len(specs))
    xs, ps = [], []
    for s, c, ss in zip(specs, counts, children):
        if c > 0:
            e = sample_ensemble(s.params, int(c), ss)
            xs.append(e.x)
            ps.append(e.p)
    return np.vstack(xs), np.vstack(ps)


def histogram_grid(x, p, t, scn: Scenario):
    cfg = scn.cfg
    xt, _ = propagate_arrays(x, p, t, cfg)
    H, _, _ = np.histogram2d(xt[:, 0], xt[:, 1], bins=(scn.grid.nx, scn.grid.ny),
                             range=[[0.0, cfg.L], [0.0, cfg.L]])
    cell = (cfg.L / scn.grid.nx) * (cfg.L / scn.grid.ny)
    return DensityGrid(H / (x.shape[0] * cell), cfg.L)


def _sigma(scn: Scenario):
    if scn.grid.smooth_sigma is not None:
        return scn.grid.smooth_sigma
    return min(p.d for p in scn.packets)


def trajectory_metrics(traj, scn: Scenario, T, start):
    L = scn.cfg.L
    radius = scn.analysis.near_return_radius * L
    sep = scn.analysis.min_separation * T
    out = {"status": traj.status, "message": traj.message, "stats": traj.stats, "samples": len(traj)}
    if len(traj) < 3:
        return out
    rets = near_returns(traj, start, radius, sep)
    out["near_returns"] = rets
    out["near_returns_over_T"] = [r / T for r in rets]
    out["end_position"] = traj.x[-1]
    t0, t1 = float(traj.t[0]), float(traj.t[-1])
    n_per = int(np.floor((t1 - t0) / T + 1e-9))
    if n_per >= 1:
        edges = [t0 + k * T for k in range(n_per + 1)]
        out["mean_speed_per_period"] = speed_per_segment(traj, edges)
        wall = np.minimum(np.minimum(traj.x[:, 0], L - traj.x[:, 0]), np.minimum(traj.x[:, 1], L - traj.x[:, 1]))
        out["min_wall_distance_per_period"] = [
            float(wall[(traj.t >= lo) & (traj.t <= hi)].min()) for lo, hi in zip(edges[:-1], edges[1:])]
    try:
        out["wall_standoff_series"] = wall_standoff_series(traj, scn.cfg, radius, sep, start)
    except DomainError as exc:
        out["wall_standoff_series"] = str(exc)
    return out


def execute(scn: Scenario, out_dir):
    """Run ``scn`` and write every artifact below ``out_dir``.

    Returns ``(exit_code, manifest)``.  Numerical failures are recorded in
    the manifest under ``failures`` and give exit code 2.
    """
    check_physical(scn)
    cfg = scn.cfg
    artifacts.ensure_dir(out_dir)
    T = return_period(scn.orbit_momentum(), cfg)
    scale = T if scn.time_unit == "T_PO" else 1.0
    times = [t * scale for t in scn.times]
    manifest = {
        "config_dialect": CONFIG_DIALECT,
        "scenario": scn.to_dict(),
        "versions": _versions(),
        "seed": scn.seed,
        "derived": {"T_PO": T, "times_absolute": times, "time_scale": scale,
                    "smooth_sigma": _sigma(scn)},
        "artifacts": [],
        "failures": [],
    }
    metrics = {"grids": [], "trajectories": []}
    outputs = set(scn.outputs)

    state = None
    if outputs & {"quantum_grids", "trajectories"}:
        pj = scn.projection
        try:
            state = project(scn.packet_specs(), cfg, n_max=pj.n_max, eps_trunc=pj.eps_trunc,
                            energy_tol=pj.energy_tol)
        except TruncationError as exc:
            manifest["failures"].append({"stage": "projection", "error": str(exc),
                                         "achieved": exc.achieved, "reference": exc.reference,
                                         "suggested_n_max": exc.suggested_n_max})
            return _finish(scn, out_dir, manifest, metrics, EXIT_NUMERICAL)
        manifest["derived"].update({
            "N_max": list(state.n_max), "first_mode": list(state.lead), "rank": state.rank,
            "norm_deficit": 1.0 - state.norm() / state.norm_ref, "node_eta": state.node_eta,
            "initial_moments": moments(state, 0.0)})

    grids_dir = os.path.join(out_dir, "grids")
    want_q = "quantum_grids" in outputs
    want_c = "classical_grids" in outputs
    want_h = "classical_histograms" in outputs
    if want_q or want_c or want_h:
        artifacts.ensure_dir(grids_dir)
    mc = classical_samples(scn) if want_h else None
    sigma = _sigma(scn)
    for i, (tu, t) in enumerate(zip(scn.times, times)):
        row = {"index": i, "t": t, "t_units": tu}
        g = {}
        if want_q:
            g["quantum"] = quantum_grid(scn, state, t)
        if want_c:
            g["classical"] = classical_grid(scn, t)
        if want_h:
            g["histogram"] = histogram_grid(mc[0], mc[1], t, scn)
        for kind, grid in g.items():
            row[f"{kind}_mass"] = grid.mass
            _write_grid(scn, out_dir, manifest, f"{kind}_{i:02d}", grid, t)
        if "quantum" in g and "classical" in g:
            q, c = g["quantum"], g["classical"]
            row["l1_quantum_classical"] = l1_distance(q, c)
            row["l1_smoothed_quantum_classical"] = l1_distance(gaussian_smooth(q, sigma), c)
            row["l1_smoothed_both"] = l1_distance(gaussian_smooth(q, sigma), gaussian_smooth(c, sigma))
        if "histogram" in g and "classical" in g:
            row["l1_histogram_classical"] = l1_distance(g["histogram"], g["classical"])
        if "classical" in g:
            c = g["classical"].normalized()
            row["classical_max_rel_deviation_from_uniform"] = float(np.max(np.abs(c.values * cfg.L ** 2 - 1.0)))
        metrics["grids"].append(row)

    trajs = []
    if "trajectories" in outputs:
        tc = scn.trajectories
        ig = tc.integrator
        spec = IntegratorSpec(ig.rel_tol, ig.abs_tol, ig.h_init, ig.h_min, ig.node_eta, control=ig.control)
        t0, t1 = tc.t_start * scale, tc.t_end * scale
        n = int(round((tc.t_end - tc.t_start) * tc.samples_per_period))
        ts = t0 + (t1 - t0) * np.arange(n + 1) / n
        tdir = artifacts.ensure_dir(os.path.join(out_dir, "trajectories"))
        for k, start in enumerate(tc.starts):
            try:
                traj = integrate_trajectory(state, start, t0, t1, spec, sample_times=ts, keep_raw=False)
            except (DomainError, NodeProximityError) as exc:
                manifest["failures"].append({"stage": f"trajectory[{k}]", "error": str(exc)})
                continue
            trajs.append(traj)
            tm = trajectory_metrics(traj, scn, T, start)
            tm["index"] = k
            tm["start"] = start
            metrics["trajectories"].append(tm)
            if not traj.ok:
                manifest["failures"].append({"stage": f"trajectory[{k}]", "error": traj.message})
            shown = traj
            if tc.window is not None:
                lo, hi = tc.window[0] * scale, tc.window[1] * scale
                sel = (traj.t >= lo - 1e-12 * hi) & (traj.t <= hi + 1e-12 * hi)
                shown = _subset(traj, sel)
            path = os.path.join(tdir, f"trajectory_{k:02d}.csv")
            artifacts.write_trajectory(path, shown)
            manifest["artifacts"].append(os.path.relpath(path, out_dir))

    if "po_polyline" in outputs:
        poly = orbit_polyline(scn.packets[0].x0, scn.packets[0].p0, T, cfg)
        path = os.path.join(out_dir, "po_polyline.csv")
        artifacts.write_polyline(path, poly)
        manifest["artifacts"].append(os.path.relpath(path, out_dir))
        first = [t.x[t.t <= t.t[0] + T * (1 + 1e-12)] for t in trajs if len(t) > 1]
        if first:
            metrics["hausdorff_first_period_to_orbit"] = hausdorff_distance(
                first, poly, step=scn.analysis.hausdorff_step * cfg.L)

    code = EXIT_NUMERICAL if manifest["failures"] else EXIT_OK
    return _finish(scn, out_dir, manifest, metrics, code)


def _subset(traj, sel):
    from ..bohmian import BohmTrajectory

    return BohmTrajectory(t=traj.t[sel], x=traj.x[sel], v=traj.v[sel], R=traj.R[sel], Q=traj.Q[sel],
                          initial=traj.initial, stats=traj.stats, status=traj.status, message=traj.message)


def _write_grid(scn, out_dir, manifest, stem, grid, t):
    base = os.path.join(out_dir, "grids", stem)
    if scn.grid_format in ("binary", "both"):
        artifacts.write_grid(base + ".grid", grid, time=t)
        manifest["artifacts"].append(os.path.relpath(base + ".grid", out_dir))
    if scn.grid_format in ("csv", "both"):
        artifacts.write_grid_csv(base + ".csv", grid)
        manifest["artifacts"].append(os.path.relpath(base + ".csv", out_dir))


def _finish(scn, out_dir, manifest, metrics, code):
    if "metrics" in scn.outputs:
        path = os.path.join(out_dir, "metrics.json")
        artifacts.write_json(path, metrics)
        manifest["artifacts"].append("metrics.json")
    if "plots" in scn.outputs:
        for rel in plots.write_plot_scripts(out_dir, manifest):
            manifest["artifacts"].append(rel)
    manifest["exit_status"] = code
    with open(os.path.join(out_dir, "scenario.yaml"), "w", encoding="utf-8") as fh:
        fh.write(scn.to_yaml())
    manifest["artifacts"].append("scenario.yaml")
    manifest["artifacts"] = sorted(manifest["artifacts"])
    artifacts.write_json(os.path.join(out_dir, "manifest.json"), manifest)
    return code, manifest
