"""Built-in scenarios, one per figure panel.

All presets share one packet geometry.  The box (``L = 10``, ``m = hbar =
1``), ``Delta = d``, the snapshot times, the antisymmetric two-packet
superposition and the trajectory spans are fixed by the figures; the width,
momentum and packet centres are implementer choices, listed per preset under
``provenance``.

Momentum choice: ``p = 2 pi k / L (1/2, 1)`` with ``k = 1000`` puts the
packets on the ``(2, 1)`` orbit family with a de Broglie wavelength far
below ``d``.  Slower packets (the obvious ``|p| ~ 10``) spread over the
whole box within one orbit period, so the trajectory scenarios lose the
bouncing-ball regime before the first return.  The spreading per period
is set by ``|p| d``; the width ``d = 0.2`` keeps the envelope at ``5 T``
wide compared with ``d``, so smoothing with ``sigma = d`` removes the
fringes without visibly broadening it.
"""
from __future__ import annotations

import math

from .config import Scenario, parse_scenario

L_BOX = 10.0
WIDTH = 0.2
MODE = 1000
P_Y = 2.0 * math.pi * MODE / L_BOX
P_X = 0.5 * P_Y
X_M = [6.0, 3.0]
X_N = [6.0, 7.0]
SEED = 20240611

_FIXED = ["billiard.L", "billiard.m", "billiard.hbar", "packets[*].Delta = d", "times"]
_CHOSEN = ["packets[*].d", "packets[*].p0", "packets[*].x0"]


def _packet_m(weight=1.0):
    return {"x0": list(X_M), "p0": [P_X, -P_Y], "d": WIDTH, "Delta": WIDTH, "weight": weight}


def _packet_n(weight=1.0):
    return {"x0": list(X_N), "p0": [P_X, P_Y], "d": WIDTH, "Delta": WIDTH, "weight": weight}


def _pair_packets():
    s = 1.0 / math.sqrt(2.0)
    return [_packet_m([s, 0.0]), _packet_n([-s, 0.0])]


def _base(name, figure, description, packets, fixed=(), chosen=()):
    return {
        "name": name,
        "figure": figure,
        "description": description,
        "billiard": {"L": L_BOX, "m": 1.0, "hbar": 1.0},
        "packets": packets,
        "po_momentum": [P_X, P_Y],
        "seed": SEED,
        "provenance": {"fixed_by_figure": list(_FIXED) + list(fixed), "implementer_choice": list(_CHOSEN) + list(chosen)},
    }


def _density(name, figure, description, packets, times, quantum, fixed=()):
    raw = _base(name, figure, description, packets, fixed)
    raw["times"] = times
    raw["classical"] = {"samples": 1_000_000}
    out = ["classical_grids", "classical_histograms", "metrics", "plots"]
    if quantum:
        out = ["quantum_grids"] + out
    raw["outputs"] = out
    raw["grid"] = {"nx": 128, "ny": 128, "oversample": 2, "smooth_sigma": WIDTH}
    return raw


def _trajectory(name, figure, description, packets, starts, t_end, window=None, fixed=(), chosen=()):
    raw = _base(name, figure, description, packets, fixed, chosen)
    raw["trajectories"] = {
        "starts": starts,
        "t_start": 0.0,
        "t_end": t_end,
        "window": window,
        "samples_per_period": 512,
        "integrator": {"rel_tol": 1e-9, "abs_tol": 1e-9, "control": "unit_step"},
    }
    raw["outputs"] = ["trajectories", "po_polyline", "metrics", "plots"]
    return raw


_SNAP_SINGLE = [0.0, 0.75, 1.0, 5.0, 25.0, 100.0]
_SNAP_PAIR = [0.0, 11.0 / 8.0, 5.0]


def _raw_presets():
    pair_w = ["packets[*].weight = (1/sqrt2, -1/sqrt2)"]
    return [
        _density("fig2", "Fig. 2", "Classical configuration-space density of one Gaussian ensemble on the (2,1) orbit",
                 [_packet_m()], _SNAP_SINGLE, quantum=False),
        _density("fig3", "Fig. 3", "Classical density of the equal mixture of the M and N ensembles",
                 [_packet_m([1.0 / math.sqrt(2.0), 0.0]), _packet_n([1.0 / math.sqrt(2.0), 0.0])],
                 _SNAP_PAIR, quantum=False),
        _density("fig4", "Fig. 4", "Quantum density of one Gaussian packet with the classical comparison",
                 [_packet_m()], _SNAP_SINGLE, quantum=True),
        _density("fig5", "Fig. 5", "Quantum density of the antisymmetric M/N superposition",
                 _pair_packets(), _SNAP_PAIR, quantum=True, fixed=pair_w),
        _trajectory("fig6a", "Fig. 6a", "Bohmian trajectory from the packet maximum over three orbit periods",
                    [_packet_m()], [list(X_M)], 3.0, fixed=["trajectories.t_end"]),
        _trajectory("fig6b", "Fig. 6b", "Bohmian trajectory from the packet maximum over forty orbit periods",
                    [_packet_m()], [list(X_M)], 40.0, fixed=["trajectories.t_end"]),
        _trajectory("fig6c", "Fig. 6c", "Bohmian trajectory started off the maximum by (L/80, L/80)",
                    [_packet_m()], [[X_M[0] + L_BOX / 80.0, X_M[1] + L_BOX / 80.0]], 13.0,
                    fixed=["trajectories.starts offset (L/80, L/80)"], chosen=["trajectories.t_end"]),
        _trajectory("fig7a", "Fig. 7a", "Two-packet state, trajectory from M over ten orbit periods",
                    _pair_packets(), [list(X_M)], 10.0, fixed=pair_w + ["trajectories.t_end"]),
        _trajectory("fig7b", "Fig. 7b", "Two-packet state, trajectory from N over ten orbit periods",
                    _pair_packets(), [list(X_N)], 10.0, fixed=pair_w + ["trajectories.t_end"]),
        _trajectory("fig7c", "Fig. 7c", "Two-packet state, trajectories from M and N over one period with the orbit",
                    _pair_packets(), [list(X_M), list(X_N)], 1.0, fixed=pair_w + ["trajectories.t_end"]),
        _trajectory("fig7d", "Fig. 7d", "Two-packet state, trajectories from M and N shown for 10 < t/T < 11",
                    _pair_packets(), [list(X_M), list(X_N)], 11.0, window=[10.0, 11.0],
                    fixed=pair_w + ["trajectories.window"]),
    ]


def preset_names():
    return [r["name"] for r in _raw_presets()]


def get_preset(name, seed=None) -> Scenario:
    """Return the validated preset scenario ``name``."""
    for raw in _raw_presets():
        if raw["name"] == name:
            if seed is not None:
                raw["seed"] = seed
            return parse_scenario(raw)
    raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")


def list_presets():
    """``(name, description, figure)`` for every preset."""
    return [(r["name"], r["description"], r["figure"]) for r in _raw_presets()]
