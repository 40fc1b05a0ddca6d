"""Classical square billiard: point dynamics, periodic orbits and the
Liouville evolution of a Gaussian phase-space ensemble.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError
from .geometry import BilliardConfig, fold_array, fold_coordinate

__all__ = [
    "ClassicalState",
    "GaussianEnsembleParams",
    "ClassicalEnsemble",
    "propagate_classical",
    "propagate_arrays",
    "detect_periodic",
    "po_period",
    "return_period",
    "orbit_polyline",
    "sample_ensemble",
    "classical_density_free",
    "classical_density_boxed",
    "default_k_max",
    "ensemble_histogram",
    "position_spread",
]

# one-sided Gaussian tail of 1e-12 lies beyond 7.03 standard deviations
_TAIL_Z = 7.04


@dataclass(frozen=True)
class ClassicalState:
    x: tuple
    p: tuple
    t: float = 0.0

    @property
    def energy_factor(self):
        """``|p|^2``; divide by ``2m`` for the kinetic energy."""
        return self.p[0] ** 2 + self.p[1] ** 2


@dataclass(frozen=True)
class GaussianEnsembleParams:
    """Centre ``(x0, p0)`` and widths of the phase-space Gaussian.

    ``d`` is the position standard deviation; the momentum standard
    deviation is ``1 / (2 Delta)``.
    """

    x0: tuple
    p0: tuple
    d: float
    Delta: float

    def __post_init__(self):
        object.__setattr__(self, "x0", (float(self.x0[0]), float(self.x0[1])))
        object.__setattr__(self, "p0", (float(self.p0[0]), float(self.p0[1])))
        if not (self.d > 0 and self.Delta > 0):
            raise DomainError(f"widths must be positive, got d={self.d}, Delta={self.Delta}")

    @property
    def momentum_std(self):
        return 1.0 / (2.0 * self.Delta)

    def moments(self):
        """Analytic first and second moments per axis."""
        return {
            "x": self.x0[0],
            "y": self.x0[1],
            "x2": self.x0[0] ** 2 + self.d ** 2,
            "y2": self.x0[1] ** 2 + self.d ** 2,
            "px": self.p0[0],
            "py": self.p0[1],
            "px2": self.p0[0] ** 2 + 1.0 / (4.0 * self.Delta ** 2),
            "py2": self.p0[1] ** 2 + 1.0 / (4.0 * self.Delta ** 2),
        }


@dataclass
class ClassicalEnsemble:
    """Independent phase-space samples held as ``(n, 2)`` arrays.

    Positions are the raw Gaussian draws, which may fall outside the box;
    propagation folds them, consistently with the folded analytic density.
    """

    x: np.ndarray
    p: np.ndarray
    seed: int
    params: GaussianEnsembleParams
    weights: np.ndarray = field(default=None)

    def __len__(self):
        return self.x.shape[0]

    def __getitem__(self, i):
        """Raw (unfolded) sample ``i`` as a :class:`ClassicalState`."""
        return ClassicalState(tuple(float(v) for v in self.x[i]), tuple(float(v) for v in self.p[i]))

    def state(self, i, cfg: BilliardConfig):
        """Sample ``i`` folded into the box."""
        return propagate_classical(self[i], 0.0, cfg)


def propagate_arrays(x, p, dt, cfg: BilliardConfig):
    """Propagate ``(n, 2)`` positions and momenta by ``dt`` with wall bounces."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    u = x + p * (dt / cfg.m)
    folded, odd = fold_array(u, cfg.L)
    return folded, np.where(odd, -p, p)


def propagate_classical(s: ClassicalState, dt: float, cfg: BilliardConfig) -> ClassicalState:
    """Advance a point particle by ``dt`` using the unfold/fold construction."""
    if dt < 0:
        raise DomainError("dt must be >= 0; reverse the momentum to go backwards")
    xs, ps = [], []
    for k in range(2):
        f = fold_coordinate(s.x[k] + s.p[k] * dt / cfg.m, cfg.L)
        xs.append(f.u)
        ps.append(-s.p[k] if f.odd else s.p[k])
    return ClassicalState(tuple(xs), tuple(ps), s.t + dt)


def _convergents(q: Fraction):
    """Yield continued-fraction convergents of a non-negative rational."""
    h0, h1 = 0, 1
    k0, k1 = 1, 0
    num, den = q.numerator, q.denominator
    while den:
        a, r = divmod(num, den)
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        yield h1, k1
        num, den = den, r


def detect_periodic(p, tol=1e-12, max_denominator=10**6):
    """Bounce numbers ``(n_x, n_y)`` of the periodic orbit with momentum ``p``.

    The orbit closes when ``p_x / p_y = n_y / n_x``.  Convergents of the
    continued fraction of ``|p_x / p_y|`` are scanned in order and the first
    one within ``tol`` (relative) is returned; ``None`` when no convergent
    with ``n_x <= max_denominator`` is close enough.
    """
    px, py = float(p[0]), float(p[1])
    if px == 0.0 and py == 0.0:
        raise DomainError("momentum must be nonzero")
    if py == 0.0:
        return (0, 1)
    if px == 0.0:
        return (1, 0)
    ratio = abs(Fraction(px) / Fraction(py))
    target = float(ratio)
    for n_y, n_x in _convergents(ratio):
        if n_x > max_denominator:
            return None
        if abs(target - n_y / n_x) <= tol * target:
            return (n_x, n_y)
    return None


def po_period(n_x, n_y, p, cfg: BilliardConfig):
    """``L sqrt(n_x^2 + n_y^2) / |p|``, the closed-orbit period expression.

    With coprime bounce numbers this is the time to reach the mirror-image
    point; the phase-space return time is :func:`return_period`.
    """
    pn = math.hypot(p[0], p[1])
    if pn == 0.0:
        raise DomainError("momentum must be nonzero")
    return cfg.L * math.hypot(n_x, n_y) / pn


def return_period(p, cfg: BilliardConfig, tol=1e-12, max_denominator=10**6):
    """First return time to the initial phase-space point.

    Equal to ``po_period`` evaluated with the total wall-bounce counts per
    period (twice the coprime pair) and scaled by the mass.
    """
    n = detect_periodic(p, tol, max_denominator)
    if n is None:
        raise DomainError(f"momentum {tuple(p)!r} does not give a periodic orbit")
    return cfg.m * po_period(2 * n[0], 2 * n[1], p, cfg)


def orbit_polyline(x0, p, t_span, cfg: BilliardConfig):
    """Vertices of the folded trajectory from ``x0`` over ``[0, t_span]``.

    Vertices are the start, every wall bounce, and the end point.
    """
    v = np.asarray(p, dtype=float) / cfg.m
    times = {0.0, float(t_span)}
    for k in range(2):
        if v[k] == 0.0:
            continue
        u0 = float(x0[k])
        u1 = u0 + v[k] * t_span
        lo, hi = sorted((u0, u1))
        j = math.floor(lo / cfg.L) + 1
        while j * cfg.L < hi:
            times.add((j * cfg.L - u0) / v[k])
            j += 1
    ts = np.array(sorted(times))
    u = np.asarray(x0, dtype=float)[None, :] + ts[:, None] * v[None, :]
    folded, _ = fold_array(u, cfg.L)
    return folded


def sample_ensemble(params: GaussianEnsembleParams, n: int, seed: int) -> ClassicalEnsemble:
    """Draw ``n`` samples from the product Gaussian phase-space density."""
    if n < 1:
        raise DomainError("need at least one sample")
    rng = np.random.default_rng(seed)
    x = rng.normal(loc=params.x0, scale=params.d, size=(n, 2))
    p = rng.normal(loc=params.p0, scale=params.momentum_std, size=(n, 2))
    return ClassicalEnsemble(x=x, p=p, seed=seed, params=params)


def position_spread(params: GaussianEnsembleParams, t, cfg: BilliardConfig):
    """Standard deviation of the free configuration density at time ``t``."""
    return math.sqrt(params.d ** 2 + t ** 2 / (4.0 * params.Delta ** 2 * cfg.m ** 2))


def classical_density_free(x, t, params: GaussianEnsembleParams, cfg: BilliardConfig):
    """Momentum-integrated Liouville solution in the unbounded plane.

    ``x`` is a pair ``(x, y)`` of scalars or broadcastable arrays.
    """
    if np.any(np.asarray(t) < 0):
        raise DomainError("t must be >= 0")
    m, D, d = cfg.m, params.Delta, params.d
    xx, yy = x
    dx = params.x0[0] - xx + params.p0[0] * t / m
    dy = params.x0[1] - yy + params.p0[1] * t / m
    a = 2.0 * m ** 2 * D ** 2 / (t ** 2 + 4.0 * d ** 2 * m ** 2 * D ** 2)
    z = math.pi * t ** 2 / (2.0 * D ** 2 * m ** 2) + 2.0 * math.pi * d ** 2
    return np.exp(-a * (dx ** 2 + dy ** 2)) / z


def default_k_max(params: GaussianEnsembleParams, t, cfg: BilliardConfig):
    """Smallest image cutoff whose neglected tail weight is below 1e-12."""
    s = position_spread(params, t, cfg)
    k = 0
    for axis in range(2):
        c = params.x0[axis] + params.p0[axis] * t / cfg.m
        reach = max(abs(c - _TAIL_Z * s), abs(c + _TAIL_Z * s))
        k = max(k, math.ceil(max(0.0, reach / cfg.L - 1.0) / 2.0))
    return int(k)


def _folded_axis(u, centre, a, L, k_max):
    """``sum_j exp(-a (2jL +- u - centre)^2)`` over the image lattice of one axis."""
    u = np.asarray(u, dtype=float)
    j = np.arange(-k_max, k_max + 1, dtype=float)
    shape = u.shape + (1,)
    uu = u.reshape(shape)
    even = 2.0 * j * L + uu - centre
    odd = 2.0 * j * L - uu - centre
    return np.exp(-a * even ** 2).sum(axis=-1) + np.exp(-a * odd ** 2).sum(axis=-1)


def classical_density_boxed(x, t, params: GaussianEnsembleParams, cfg: BilliardConfig, k_max=None):
    """Configuration density in the box: the free density summed over all
    mirror images of the field point, each with weight ``+1``.

    The free density factorizes over axes, so the sum over the
    ``(2 (2 k_max + 1))^2`` planar images is evaluated as a product of two
    one-axis image sums.
    """
    if k_max is None:
        k_max = default_k_max(params, t, cfg)
    m, D, d = cfg.m, params.Delta, params.d
    a = 2.0 * m ** 2 * D ** 2 / (t ** 2 + 4.0 * d ** 2 * m ** 2 * D ** 2)
    z = math.pi * t ** 2 / (2.0 * D ** 2 * m ** 2) + 2.0 * math.pi * d ** 2
    cx = params.x0[0] + params.p0[0] * t / m
    cy = params.x0[1] + params.p0[1] * t / m
    xx, yy = x
    return _folded_axis(xx, cx, a, cfg.L, k_max) * _folded_axis(yy, cy, a, cfg.L, k_max) / z


def ensemble_histogram(e: ClassicalEnsemble, t, bins, cfg: BilliardConfig):
    """Histogram of the ensemble positions at time ``t``, normalized to unit
    mass over the box."""
    from .analysis import DensityGrid

    if len(e) == 0:
        raise DomainError("empty ensemble")
    nx, ny = (bins, bins) if np.isscalar(bins) else bins
    xs, _ = propagate_arrays(e.x, e.p, t, cfg)
    counts, _, _ = np.histogram2d(
        xs[:, 0], xs[:, 1], bins=[nx, ny], range=[[0.0, cfg.L], [0.0, cfg.L]]
    )
    cell = (cfg.L / nx) * (cfg.L / ny)
    return DensityGrid.from_values(counts / (len(e) * cell), cfg.L)
