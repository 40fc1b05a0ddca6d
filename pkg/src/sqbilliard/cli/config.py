"""Scenario description: parsing, validation and serialization.

A scenario is one YAML document.  Every field has an explicit default that
is written back into the run manifest, so a manifest alone reproduces the
run.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any

import yaml

from ..classical import GaussianEnsembleParams
from ..errors import DomainError
from ..geometry import BilliardConfig
from ..quantum import PacketSpec

CONFIG_DIALECT = "yaml-1.1/sqbilliard-scenario-1"

OUTPUT_KINDS = (
    "quantum_grids",
    "classical_grids",
    "classical_histograms",
    "trajectories",
    "po_polyline",
    "metrics",
    "plots",
)
GRID_FORMATS = ("binary", "csv", "both")
TIME_UNITS = ("T_PO", "absolute")
CONTROLS = ("unit_step", "step")


class ConfigError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class PacketConfig:
    x0: list
    p0: list
    d: float
    Delta: float
    weight: list = field(default_factory=lambda: [1.0, 0.0])

    def to_spec(self) -> PacketSpec:
        params = GaussianEnsembleParams(tuple(self.x0), tuple(self.p0), self.d, self.Delta)
        return PacketSpec(params, complex(self.weight[0], self.weight[1]))


@dataclass
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    control: str = "unit_step"
    h_init: float | None = None
    h_min: float | None = None
    node_eta: float | None = None


@dataclass
class TrajectoryConfig:
    starts: list = field(default_factory=list)
    t_start: float = 0.0
    t_end: float = 1.0
    window: list | None = None
    samples_per_period: int = 512
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)


@dataclass
class GridConfig:
    nx: int = 128
    ny: int = 128
    oversample: int = 2
    smooth_sigma: float | None = None


@dataclass
class ProjectionConfig:
    eps_trunc: float = 1e-8
    energy_tol: float = 1e-6
    n_max: list | None = None


@dataclass
class ClassicalConfig:
    samples: int = 0


@dataclass
class AnalysisConfig:
    near_return_radius: float = 0.05
    min_separation: float = 0.25
    hausdorff_step: float = 0.001


@dataclass
class Scenario:
    """Resolved scenario.

    Lengths in ``analysis`` are fractions of ``L`` and ``min_separation`` is
    a fraction of the orbit period.  ``times`` and trajectory times are in
    ``time_unit``.
    """

    name: str
    description: str = ""
    figure: str = ""
    billiard: dict = field(default_factory=lambda: {"L": 10.0, "m": 1.0, "hbar": 1.0})
    packets: list = field(default_factory=list)
    po_momentum: list | None = None
    time_unit: str = "T_PO"
    times: list = field(default_factory=list)
    grid: GridConfig = field(default_factory=GridConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    classical: ClassicalConfig = field(default_factory=ClassicalConfig)
    trajectories: TrajectoryConfig | None = None
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    outputs: list = field(default_factory=lambda: ["metrics"])
    grid_format: str = "binary"
    seed: int | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def cfg(self) -> BilliardConfig:
        return BilliardConfig(**self.billiard)

    def packet_specs(self):
        return [p.to_spec() for p in self.packets]

    def orbit_momentum(self):
        return tuple(self.po_momentum) if self.po_momentum is not None else tuple(self.packets[0].p0)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)


def _num(value, name, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(name, "must be finite")
    if positive and v <= 0:
        raise ConfigError(name, f"must be > 0, got {v}")
    return v


def _int(value, name, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {value}")
    return value


def _pair(value, name):
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(name, f"expected a pair of numbers, got {value!r}")
    return [_num(value[0], f"{name}[0]"), _num(value[1], f"{name}[1]")]


def _section(raw, name, cls):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(name, "expected a mapping")
    known = set(cls.__dataclass_fields__)
    extra = sorted(set(raw) - known)
    if extra:
        raise ConfigError(f"{name}.{extra[0]}", "unknown field")
    return raw


def _weight(value, name):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value), 0.0]
    return _pair(value, name)


def parse_scenario(raw: Any) -> Scenario:
    """Validate a mapping (as loaded from YAML) into a :class:`Scenario`.

    Raises
    ------
    ConfigError
        Naming the offending field and the violated constraint.
    """
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "scenario must be a mapping")
    known = set(Scenario.__dataclass_fields__)
    extra = sorted(set(raw) - known)
    if extra:
        raise ConfigError(extra[0], "unknown field")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "a nonempty string is required")

    bil = raw.get("billiard", {"L": 10.0, "m": 1.0, "hbar": 1.0})
    if not isinstance(bil, dict) or set(bil) - {"L", "m", "hbar"}:
        raise ConfigError("billiard", "expected a mapping with keys L, m, hbar")
    billiard = {k: _num(bil.get(k, 10.0 if k == "L" else 1.0), f"billiard.{k}", positive=True)
                for k in ("L", "m", "hbar")}
    L = billiard["L"]

    packets_raw = raw.get("packets")
    if not isinstance(packets_raw, list) or not packets_raw:
        raise ConfigError("packets", "at least one packet is required")
    packets = []
    for i, p in enumerate(packets_raw):
        key = f"packets[{i}]"
        if not isinstance(p, dict):
            raise ConfigError(key, "expected a mapping")
        extra = sorted(set(p) - set(PacketConfig.__dataclass_fields__))
        if extra:
            raise ConfigError(f"{key}.{extra[0]}", "unknown field")
        for req in ("x0", "p0", "d"):
            if req not in p:
                raise ConfigError(f"{key}.{req}", "missing")
        x0 = _pair(p["x0"], f"{key}.x0")
        if not (0 < x0[0] < L and 0 < x0[1] < L):
            raise ConfigError(f"{key}.x0", f"centre must lie inside (0, {L})^2")
        d = _num(p["d"], f"{key}.d", positive=True)
        packets.append(PacketConfig(
            x0=x0, p0=_pair(p["p0"], f"{key}.p0"), d=d,
            Delta=_num(p.get("Delta", d), f"{key}.Delta", positive=True),
            weight=_weight(p.get("weight", 1.0), f"{key}.weight")))
    if all(w.weight == [0.0, 0.0] for w in packets):
        raise ConfigError("packets", "all weights are zero")

    po = raw.get("po_momentum")
    po = None if po is None else _pair(po, "po_momentum")
    if (po or packets[0].p0) == [0.0, 0.0]:
        raise ConfigError("po_momentum", "orbit momentum must be nonzero")

    unit = raw.get("time_unit", "T_PO")
    if unit not in TIME_UNITS:
        raise ConfigError("time_unit", f"must be one of {TIME_UNITS}")
    times_raw = raw.get("times", [])
    if not isinstance(times_raw, list):
        raise ConfigError("times", "expected a list")
    times = [_num(t, f"times[{i}]") for i, t in enumerate(times_raw)]
    if any(t < 0 for t in times):
        raise ConfigError("times", "times must be >= 0")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ConfigError("times", "times must be strictly increasing")

    g = _section(raw.get("grid"), "grid", GridConfig)
    grid = GridConfig() if isinstance(g, GridConfig) else GridConfig(
        nx=_int(g.get("nx", 128), "grid.nx", 2), ny=_int(g.get("ny", 128), "grid.ny", 2),
        oversample=_int(g.get("oversample", 2), "grid.oversample", 1),
        smooth_sigma=_num(g.get("smooth_sigma"), "grid.smooth_sigma", allow_none=True))
    if grid.smooth_sigma is not None and grid.smooth_sigma < 0:
        raise ConfigError("grid.smooth_sigma", "must be >= 0")

    pr = _section(raw.get("projection"), "projection", ProjectionConfig)
    if isinstance(pr, ProjectionConfig):
        projection = pr
    else:
        n_max = pr.get("n_max")
        if n_max is not None:
            if isinstance(n_max, int) and not isinstance(n_max, bool):
                n_max = [n_max, n_max]
            if not isinstance(n_max, list) or len(n_max) != 2:
                raise ConfigError("projection.n_max", "expected an integer or a pair of integers")
            n_max = [_int(n_max[0], "projection.n_max[0]", 1), _int(n_max[1], "projection.n_max[1]", 1)]
        projection = ProjectionConfig(
            eps_trunc=_num(pr.get("eps_trunc", 1e-8), "projection.eps_trunc", positive=True),
            energy_tol=_num(pr.get("energy_tol", 1e-6), "projection.energy_tol", positive=True),
            n_max=n_max)

    c = _section(raw.get("classical"), "classical", ClassicalConfig)
    classical = c if isinstance(c, ClassicalConfig) else ClassicalConfig(
        samples=_int(c.get("samples", 0), "classical.samples", 0))

    trajectories = None
    tr = raw.get("trajectories")
    if tr is not None:
        tr = _section(tr, "trajectories", TrajectoryConfig)
        starts = tr.get("starts", [])
        if not isinstance(starts, list) or not starts:
            raise ConfigError("trajectories.starts", "at least one start point is required")
        starts = [_pair(s, f"trajectories.starts[{i}]") for i, s in enumerate(starts)]
        for i, s in enumerate(starts):
            if not (0 < s[0] < L and 0 < s[1] < L):
                raise ConfigError(f"trajectories.starts[{i}]", "start must lie strictly inside the box")
        t_start = _num(tr.get("t_start", 0.0), "trajectories.t_start")
        t_end = _num(tr.get("t_end", 1.0), "trajectories.t_end")
        if not t_end > t_start:
            raise ConfigError("trajectories.t_end", "must exceed t_start")
        window = tr.get("window")
        if window is not None:
            window = _pair(window, "trajectories.window")
            if not (t_start <= window[0] < window[1] <= t_end):
                raise ConfigError("trajectories.window", "must satisfy t_start <= lo < hi <= t_end")
        ig = _section(tr.get("integrator"), "trajectories.integrator", IntegratorConfig)
        if isinstance(ig, IntegratorConfig):
            integ = ig
        else:
            integ = IntegratorConfig(
                rel_tol=_num(ig.get("rel_tol", 1e-9), "trajectories.integrator.rel_tol", positive=True),
                abs_tol=_num(ig.get("abs_tol", 1e-9), "trajectories.integrator.abs_tol", positive=True),
                control=ig.get("control", "unit_step"),
                h_init=_num(ig.get("h_init"), "trajectories.integrator.h_init", positive=True, allow_none=True),
                h_min=_num(ig.get("h_min"), "trajectories.integrator.h_min", positive=True, allow_none=True),
                node_eta=_num(ig.get("node_eta"), "trajectories.integrator.node_eta", positive=True,
                              allow_none=True))
            if integ.control not in CONTROLS:
                raise ConfigError("trajectories.integrator.control", f"must be one of {CONTROLS}")
            if integ.h_init is not None and integ.h_min is not None and not integ.h_min < integ.h_init:
                raise ConfigError("trajectories.integrator.h_min", "must be smaller than h_init")
        trajectories = TrajectoryConfig(
            starts=starts, t_start=t_start, t_end=t_end, window=window,
            samples_per_period=_int(tr.get("samples_per_period", 512), "trajectories.samples_per_period", 1),
            integrator=integ)

    a = _section(raw.get("analysis"), "analysis", AnalysisConfig)
    analysis = a if isinstance(a, AnalysisConfig) else AnalysisConfig(
        near_return_radius=_num(a.get("near_return_radius", 0.05), "analysis.near_return_radius", positive=True),
        min_separation=_num(a.get("min_separation", 0.25), "analysis.min_separation", positive=True),
        hausdorff_step=_num(a.get("hausdorff_step", 0.001), "analysis.hausdorff_step", positive=True))

    outputs = raw.get("outputs", ["metrics"])
    if not isinstance(outputs, list):
        raise ConfigError("outputs", "expected a list")
    for i, o in enumerate(outputs):
        if o not in OUTPUT_KINDS:
            raise ConfigError(f"outputs[{i}]", f"unknown output {o!r}; choose from {OUTPUT_KINDS}")
    needs_times = {"quantum_grids", "classical_grids", "classical_histograms"} & set(outputs)
    if needs_times and not times:
        raise ConfigError("times", f"required by outputs {sorted(needs_times)}")
    if "trajectories" in outputs and trajectories is None:
        raise ConfigError("trajectories", "required by output 'trajectories'")
    if "classical_histograms" in outputs and classical.samples < 1:
        raise ConfigError("classical.samples", "must be >= 1 when classical_histograms is requested")

    fmt = raw.get("grid_format", "binary")
    if fmt not in GRID_FORMATS:
        raise ConfigError("grid_format", f"must be one of {GRID_FORMATS}")

    seed = raw.get("seed")
    if seed is not None:
        seed = _int(seed, "seed", 0)
    if "classical_histograms" in outputs and seed is None:
        raise ConfigError("seed", "a seed is mandatory for Monte-Carlo sampling")

    prov = raw.get("provenance", {})
    if not isinstance(prov, dict):
        raise ConfigError("provenance", "expected a mapping")

    return Scenario(
        name=name, description=str(raw.get("description", "")), figure=str(raw.get("figure", "")),
        billiard=billiard, packets=packets, po_momentum=po, time_unit=unit, times=times, grid=grid,
        projection=projection, classical=classical, trajectories=trajectories, analysis=analysis,
        outputs=list(outputs), grid_format=fmt, seed=seed, provenance=dict(prov))


def load_scenario(path) -> Scenario:
    """Read and validate a YAML scenario file."""
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return parse_scenario(raw)


def check_physical(scn: Scenario):
    """Validation that needs the domain types (box, packet widths)."""
    try:
        scn.cfg
        for p in scn.packet_specs():
            p.params
    except DomainError as exc:
        raise ConfigError("billiard/packets", str(exc)) from None
