"""Quantum evolution in the box by exact sine-series decomposition.

States are stored as low-rank factors over the two axes (see
:mod:`sqbilliard._kernels`).  A Gaussian packet is an outer product of two
one-dimensional functions, so a superposition of ``P`` packets has rank at
most ``P``; after compression a mirror-symmetric pair is rank one.

The method-of-images propagator and the short-time density are provided as
independent representations for cross-checks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
import scipy.fft
from numpy.polynomial.legendre import leggauss

from . import _kernels
from .classical import GaussianEnsembleParams
from .errors import DomainError, NodeProximityError, TruncationError
from .geometry import BilliardConfig, image_offsets_1d

__all__ = [
    "EigenIndex",
    "PacketSpec",
    "QuantumState",
    "HydroFields",
    "eigen_energy",
    "packet_amplitude",
    "project",
    "project_grid",
    "evolve",
    "evaluate_psi",
    "evaluate_fields",
    "psi_grid",
    "propagator_images",
    "propagator_spectral",
    "short_time_density",
    "hydrodynamic_fields",
    "q_finite_difference",
    "continuity_residual",
    "hamilton_jacobi_residual",
    "moments",
    "gauss_legendre_nodes",
]

_GL_ORDER = 20


class EigenIndex(NamedTuple):
    n_x: int
    n_y: int

    def check(self):
        if self.n_x < 1 or self.n_y < 1:
            raise DomainError(f"eigen indices must be >= 1, got {tuple(self)}")
        return self


@dataclass(frozen=True)
class PacketSpec:
    """A Gaussian packet with complex superposition ``weight``."""

    params: GaussianEnsembleParams
    weight: complex = 1.0


class HydroFields(NamedTuple):
    R: float
    v: np.ndarray
    j: np.ndarray
    Q: float


def eigen_energy(idx, cfg: BilliardConfig):
    """Energy of the box eigenstate ``(n_x, n_y)``."""
    n_x, n_y = EigenIndex(*idx).check()
    return cfg.hbar ** 2 * math.pi ** 2 * (n_x ** 2 + n_y ** 2) / (2.0 * cfg.m * cfg.L ** 2)


def _axis_packet(u, u0, p0, d, hbar):
    """One-axis factor of the packet; the product of both axes is normalized."""
    u = np.asarray(u, dtype=float)
    norm = (2.0 * math.pi * d * d) ** -0.25
    return norm * np.exp(-((u - u0) ** 2) / (4.0 * d * d)) * np.exp(1j * p0 * u / hbar)


def packet_amplitude(spec: PacketSpec, x, cfg: BilliardConfig | None = None):
    """Amplitude of the weighted Gaussian packet at ``x = (x, y)`` in the
    unbounded plane.  Arrays broadcast."""
    hbar = 1.0 if cfg is None else cfg.hbar
    p = spec.params
    fx = _axis_packet(x[0], p.x0[0], p.p0[0], p.d, hbar)
    fy = _axis_packet(x[1], p.x0[1], p.p0[1], p.d, hbar)
    return spec.weight * fx * fy


def gauss_legendre_nodes(a, b, n_panels, order=_GL_ORDER):
    """Composite Gauss-Legendre nodes and weights on ``[a, b]``."""
    xi, wi = leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
    weights = (half[:, None] * wi[None, :]).ravel()
    return nodes, weights


def _compress(A, B, rel_tol=1e-15):
    """Recompress ``sum_r A_r (x) B_r`` to minimal rank via QR and SVD."""
    if A.shape[0] <= 1:
        return A, B
    qa, ra = np.linalg.qr(A.T)
    qb, rb = np.linalg.qr(B.T)
    u, s, vh = np.linalg.svd(ra @ rb.T)
    keep = max(1, int(np.sum(s > rel_tol * s[0])))
    A2 = ((qa @ u[:, :keep]) * s[:keep]).T
    B2 = vh[:keep] @ qb.T
    return np.ascontiguousarray(A2), np.ascontiguousarray(B2)


class QuantumState:
    """Truncated sine-series state in low-rank factored form.

    Parameters
    ----------
    A, B : ndarray of complex, shapes ``(rank, Nx)`` and ``(rank, Ny)``
        Coefficient factors at ``t_ref``; the coefficient of the normalized
        eigenstate ``(n, m)`` is ``sum_r A[r, n-1] B[r, m-1]``.
    cfg : BilliardConfig
    t_ref : float
        Time at which the stored phases hold.
    eps_trunc : float
        Declared truncation budget.
    norm_ref : float, optional
        In-box norm of the function that was projected.
    """

    def __init__(self, A, B, cfg: BilliardConfig, t_ref=0.0, eps_trunc=1e-8, norm_ref=None):
        A = np.ascontiguousarray(np.atleast_2d(np.asarray(A, dtype=np.complex128)))
        B = np.ascontiguousarray(np.atleast_2d(np.asarray(B, dtype=np.complex128)))
        if A.shape[0] != B.shape[0]:
            raise DomainError("factor ranks differ")
        self.A = A
        self.B = B
        self.cfg = cfg
        self.t_ref = float(t_ref)
        self.eps_trunc = eps_trunc
        self.norm_ref = self.norm() if norm_ref is None else float(norm_ref)
        self._eta = None
        self._lead = None

    @property
    def n_max(self):
        return (self.A.shape[1], self.B.shape[1])

    @property
    def lead(self):
        """1-based index of the first nonzero column of each factor."""
        if self._lead is None:
            out = []
            for F in (self.A, self.B):
                nz = np.flatnonzero(np.any(F != 0, axis=0))
                out.append(int(nz[0]) + 1 if nz.size else F.shape[1])
            self._lead = tuple(out)
        return self._lead

    @property
    def rank(self):
        return self.A.shape[0]

    @property
    def omega(self):
        """Angular frequency unit: ``E(n, m) / hbar = omega (n^2 + m^2)``."""
        c = self.cfg
        return c.hbar * math.pi ** 2 / (2.0 * c.m * c.L ** 2)

    @property
    def coeffs(self):
        """Dense ``(Nx, Ny)`` coefficient table at ``t_ref``."""
        return self.A.T @ self.B

    def coefficient(self, idx):
        n_x, n_y = EigenIndex(*idx).check()
        if n_x > self.n_max[0] or n_y > self.n_max[1]:
            return 0.0j
        return complex(self.A[:, n_x - 1] @ self.B[:, n_y - 1])

    def norm(self):
        """``sum |c|^2`` from the factor Gram matrices."""
        ga = self.A.conj() @ self.A.T
        gb = self.B.conj() @ self.B.T
        return float(np.real(np.sum(ga * gb)))

    def mean_energy(self):
        n = np.arange(1, self.n_max[0] + 1) ** 2
        m = np.arange(1, self.n_max[1] + 1) ** 2
        w = np.abs(self.coeffs) ** 2
        return self.cfg.hbar * self.omega * float(np.sum(w * (n[:, None] + m[None, :]))) / float(np.sum(w))

    def axis_phases(self, t):
        tau = t - self.t_ref
        w = self.omega
        n = np.arange(1, self.n_max[0] + 1, dtype=float)
        m = np.arange(1, self.n_max[1] + 1, dtype=float)
        return np.exp(-1j * (w * tau) * n * n), np.exp(-1j * (w * tau) * m * m)

    @property
    def node_eta(self):
        """Node threshold: ``1e-12`` times the peak density at ``t = 0``."""
        if self._eta is None:
            g = np.linspace(0.0, self.cfg.L, 513)
            self._eta = 1e-12 * float(np.max(np.abs(psi_grid(self, g, g, 0.0)) ** 2))
        return self._eta

    def __repr__(self):
        return f"QuantumState(rank={self.rank}, n_max={self.n_max}, t_ref={self.t_ref})"


def _axis_coefficients(u0, p0, d, hbar, L, n_cap):
    """Sine coefficients of one packet axis factor restricted to ``[0, L]``.

    Returns ``(coeffs, in_box_norm)``; ``coeffs[n-1] = int sqrt(2/L)
    sin(n pi u / L) g(u) du`` by composite Gauss-Legendre quadrature over
    the support of the envelope.
    """
    a = max(0.0, u0 - 13.0 * d)
    b = min(L, u0 + 13.0 * d)
    if b <= a:
        return np.zeros(n_cap, complex), 0.0
    kappa = abs(p0) / hbar + n_cap * math.pi / L
    h = min(8.0 / max(kappa, 1e-300), d / 2.0)
    nodes, weights = gauss_legendre_nodes(a, b, max(4, math.ceil((b - a) / h)))
    g = _axis_packet(nodes, u0, p0, d, hbar) * weights
    out = np.empty(n_cap, complex)
    k = math.pi / L
    block = 128
    for s in range(0, n_cap, block):
        n = np.arange(s + 1, min(n_cap, s + block) + 1, dtype=float)
        out[s : s + n.size] = np.sin(np.outer(n * k, nodes)) @ g
    out *= math.sqrt(2.0 / L)
    return out, float(np.sum(np.abs(_axis_packet(nodes, u0, p0, d, hbar)) ** 2 * weights))


def _auto_cap(p0, d, hbar, L):
    return int(math.ceil((abs(p0) / hbar + 6.0 / d) * L / math.pi)) + 8


def _choose_cutoff(weights_1d, n2, energy_budget, norm_budget):
    """Smallest ``N`` whose tail norm and tail energy are within budget."""
    tail = np.cumsum(weights_1d[::-1])[::-1]
    etail = np.cumsum((weights_1d * n2)[::-1])[::-1]
    tail = np.append(tail, 0.0)
    etail = np.append(etail, 0.0)
    ok = (tail <= norm_budget) & (etail <= energy_budget)
    # first index N where the tail starting at N+1 is within budget
    idx = np.flatnonzero(ok)
    return int(idx[0]) if idx.size else len(weights_1d)


def _choose_lead(weights_1d, norm_budget):
    """Number of leading modes whose combined weight fits in ``norm_budget``."""
    head = np.cumsum(weights_1d)
    return int(np.searchsorted(head, norm_budget, side="right"))


def project(specs: Sequence[PacketSpec], cfg: BilliardConfig, n_max=None, eps_trunc=1e-8, energy_tol=1e-6):
    """Project a superposition of Gaussian packets onto the box eigenbasis.

    Parameters
    ----------
    specs : sequence of PacketSpec
    cfg : BilliardConfig
    n_max : int or (int, int), optional
        Basis cutoff per axis.  When omitted, the smallest cutoffs meeting
        the norm budget ``eps_trunc`` and the energy-tail budget
        ``energy_tol * <E>`` are selected.
    eps_trunc : float
        Allowed relative norm deficit against the in-box norm.

    Raises
    ------
    TruncationError
        If the retained norm misses more than ``eps_trunc``.
    """
    specs = list(specs)
    if not specs:
        raise DomainError("no packets to project")
    L, hbar = cfg.L, cfg.hbar
    if n_max is not None:
        n_max = (int(n_max), int(n_max)) if np.isscalar(n_max) else (int(n_max[0]), int(n_max[1]))
        if min(n_max) < 1:
            raise DomainError("n_max must be >= 1")
    caps = [
        max(_auto_cap(s.params.p0[ax], s.params.d, hbar, L) for s in specs) for ax in range(2)
    ]
    for attempt in range(4):
        if n_max is not None:
            caps = [max(caps[0], n_max[0]), max(caps[1], n_max[1])]
        rows_a, rows_b, axis_vals = [], [], []
        for s in specs:
            p = s.params
            ca, na = _axis_coefficients(p.x0[0], p.p0[0], p.d, hbar, L, caps[0])
            cb, nb = _axis_coefficients(p.x0[1], p.p0[1], p.d, hbar, L, caps[1])
            rows_a.append(s.weight * ca)
            rows_b.append(cb)
            axis_vals.append((na, nb))
        A, B = _compress(np.array(rows_a), np.array(rows_b))
        norm_ref = _in_box_norm(specs, cfg)
        full = QuantumState(A, B, cfg, eps_trunc=eps_trunc, norm_ref=norm_ref)
        C2 = np.abs(full.coeffs) ** 2
        captured = float(C2.sum())
        if 1.0 - captured / norm_ref > 0.25 * eps_trunc and attempt < 3:
            caps = [2 * c for c in caps]
            continue
        break
    wx, wy = C2.sum(axis=1), C2.sum(axis=0)
    n2x = np.arange(1, caps[0] + 1, dtype=float) ** 2
    n2y = np.arange(1, caps[1] + 1, dtype=float) ** 2
    e_mean = float(np.sum(wx * n2x) + np.sum(wy * n2y)) / captured
    # four tails (upper and lower, per axis) share half of the budget
    budget_n = 0.125 * eps_trunc * norm_ref
    budget_e = 0.5 * energy_tol * e_mean * captured
    auto = (
        _choose_cutoff(wx, n2x, budget_e, budget_n),
        _choose_cutoff(wy, n2y, budget_e, budget_n),
    )
    chosen = auto if n_max is None else n_max
    A, B = A[:, : chosen[0]].copy(), B[:, : chosen[1]].copy()
    if n_max is None:
        # a fast packet occupies a narrow band of modes; zeroing the modes
        # below it lets the evaluators skip them
        A[:, : min(_choose_lead(wx, budget_n), chosen[0] - 1)] = 0.0
        B[:, : min(_choose_lead(wy, budget_n), chosen[1] - 1)] = 0.0
    state = QuantumState(A, B, cfg, eps_trunc=eps_trunc, norm_ref=norm_ref)
    deficit = 1.0 - state.norm() / norm_ref
    if deficit > eps_trunc:
        raise TruncationError(
            f"truncated basis {chosen} retains norm deficit {deficit:.3e} > {eps_trunc:.1e}",
            achieved=state.norm(),
            reference=norm_ref,
            suggested_n_max=auto,
        )
    _warn_leakage(specs, cfg, eps_trunc, axis_vals)
    return state


def _in_box_norm(specs, cfg):
    """``int_box |sum_k w_k g_k|^2`` by tensor Gauss-Legendre quadrature."""
    L, hbar = cfg.L, cfg.hbar
    kmax = max(max(abs(s.params.p0[0]), abs(s.params.p0[1])) for s in specs) / hbar
    dmin = min(s.params.d for s in specs)
    h = min(6.0 / max(kmax, 1e-300), dmin / 2.0)
    nodes, wts = gauss_legendre_nodes(0.0, L, max(16, math.ceil(L / h)))
    fx = np.array([s.weight * _axis_packet(nodes, s.params.x0[0], s.params.p0[0], s.params.d, hbar) for s in specs])
    fy = np.array([_axis_packet(nodes, s.params.x0[1], s.params.p0[1], s.params.d, hbar) for s in specs])
    gx = (fx.conj() * wts) @ fx.T
    gy = (fy.conj() * wts) @ fy.T
    return float(np.real(np.sum(gx * gy)))


def _warn_leakage(specs, cfg, eps_trunc, axis_vals):
    for s, (na, nb) in zip(specs, axis_vals):
        p = s.params
        gap = min(p.x0[0], cfg.L - p.x0[0], p.x0[1], cfg.L - p.x0[1])
        leaked = 1.0 - na * nb
        if gap < 4.0 * p.d or leaked > eps_trunc:
            warnings.warn(
                f"packet at {p.x0} is {gap / p.d:.2f} widths from a wall; "
                f"mass outside the box {leaked:.3e} is discarded by the projection",
                RuntimeWarning,
                stacklevel=3,
            )


def project_grid(values, cfg: BilliardConfig, n_max=None, eps_trunc=1e-8):
    """Project samples of a function on the interior grid onto the basis.

    ``values[i, j]`` is the function at ``(i + 1) h, (j + 1) h`` with
    ``h = L / (M + 1)``, ``M = values.shape[0]``.  The sine transform of the
    samples gives the coefficients; the discrete orthogonality makes the
    transform exact for series of degree below ``M + 1``.
    """
    v = np.asarray(values, dtype=np.complex128)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise DomainError("expected a square grid of samples")
    M = v.shape[0]
    h = cfg.L / (M + 1)
    c = scipy.fft.dstn(v.real, type=1) + 1j * scipy.fft.dstn(v.imag, type=1)
    c *= h * h * (2.0 / cfg.L) / 4.0
    norm_ref = float(np.sum(np.abs(v) ** 2) * h * h)
    nx, ny = (M, M) if n_max is None else ((n_max, n_max) if np.isscalar(n_max) else n_max)
    c = c[:nx, :ny]
    u, s, vh = np.linalg.svd(c, full_matrices=False)
    keep = max(1, int(np.sum(s > 1e-15 * s[0]))) if s[0] > 0 else 1
    state = QuantumState((u[:, :keep] * s[:keep]).T, vh[:keep], cfg, eps_trunc=eps_trunc, norm_ref=norm_ref)
    deficit = 1.0 - state.norm() / norm_ref if norm_ref > 0 else 0.0
    if deficit > eps_trunc:
        raise TruncationError(
            f"grid projection with n_max={(nx, ny)} retains norm deficit {deficit:.3e}",
            achieved=state.norm(),
            reference=norm_ref,
            suggested_n_max=(M, M),
        )
    return state


def evolve(state: QuantumState, t):
    """Advance the stored phases by ``t``: ``c_n -> c_n exp(-i E_n t / hbar)``.

    The returned state represents the same wavefunction history, with its
    reference time moved to ``t_ref + t``.
    """
    ex, ey = state.axis_phases(state.t_ref + t)
    out = QuantumState(state.A * ex, state.B * ey, state.cfg, state.t_ref + t, state.eps_trunc, state.norm_ref)
    out._eta = state._eta
    out._lead = state._lead
    return out


def _check_in_box(state, x, y, strict=False):
    if not state.cfg.contains(x, y, strict=strict):
        where = "strictly inside" if strict else "inside"
        raise DomainError(f"point ({x}, {y}) is not {where} the box")


def evaluate_psi(state: QuantumState, x, t):
    """Wavefunction, gradient and time derivative at one point.

    Returns
    -------
    psi : complex
    grad_psi : ndarray of complex, shape (2,)
    dpsi_dt : complex
    """
    xx, yy = float(x[0]), float(x[1])
    _check_in_box(state, xx, yy)
    f = np.empty(6, np.complex128)
    _kernels.point_fields(state.A, state.B, *state.lead, state.cfg.L, state.omega, t - state.t_ref, xx, yy, f)
    return complex(f[0]), f[1:3].copy(), complex(f[5])


def evaluate_fields(state: QuantumState, xs, ts):
    """``(n, 6)`` array of ``psi, psi_x, psi_y, psi_xx, psi_yy, psi_t``."""
    xs = np.ascontiguousarray(np.atleast_2d(np.asarray(xs, dtype=float)))
    ts = np.broadcast_to(np.asarray(ts, dtype=float), (xs.shape[0],))
    L = state.cfg.L
    if np.any(xs < 0.0) or np.any(xs > L):
        raise DomainError("points must lie inside the box")
    taus = np.ascontiguousarray(ts - state.t_ref)
    return _kernels.batch_fields(state.A, state.B, *state.lead, L, state.omega, taus,
                                 np.ascontiguousarray(xs[:, 0]), np.ascontiguousarray(xs[:, 1]))


def psi_grid(state: QuantumState, xs, ys, t, derivative=None):
    """Wavefunction on the tensor grid ``xs x ys`` (shape ``(len(xs), len(ys))``).

    ``derivative`` may be ``"x"`` or ``"y"`` for the first partial derivative.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    k = math.pi / state.cfg.L
    ex, ey = state.axis_phases(t)
    n = np.arange(1, state.n_max[0] + 1, dtype=float)
    m = np.arange(1, state.n_max[1] + 1, dtype=float)
    sx = np.sin(np.outer(n * k, xs))
    sy = np.sin(np.outer(m * k, ys))
    if derivative == "x":
        sx = (n * k)[:, None] * np.cos(np.outer(n * k, xs))
    elif derivative == "y":
        sy = (m * k)[:, None] * np.cos(np.outer(m * k, ys))
    fx = (state.A * ex) @ sx
    gy = (state.B * ey) @ sy
    return (2.0 / state.cfg.L) * (fx.T @ gy)


def _free_kernel_sum(dx2_x, dx2_y, sx, sy, t, cfg):
    """``sum s_x s_y K_free`` over the image lattice, in log-safe form."""
    m, hbar = cfg.m, cfg.hbar
    pref = m / (2.0 * math.pi * hbar * t) * np.exp(-0.5j * math.pi)
    arg = 1j * m / (2.0 * hbar * t) * (dx2_x[None, :] + dx2_y[:, None])
    return pref * np.sum((sx[None, :] * sy[:, None]) * np.exp(arg))


def _check_time(t):
    t = complex(t)
    if t.imag > 0 or (t.imag == 0 and t.real <= 0) or t == 0:
        raise DomainError(f"propagation time must have Re t > 0 (Im t <= 0 allowed), got {t}")
    return t


def propagator_images(x0, x, t, cfg: BilliardConfig, k_max=None):
    """Box propagator as the signed sum of free propagators to the mirror
    images of ``x``.

    ``t`` may be complex with ``Im t < 0``, where the lattice sum converges
    absolutely.  For real ``t`` the image sum does not converge and
    ``k_max`` must be given.
    """
    t = _check_time(t)
    for pt in (x0, x):
        if not cfg.contains(pt[0], pt[1]):
            raise DomainError(f"point {tuple(pt)} outside the box")
    if k_max is None:
        if t.imag == 0:
            raise DomainError("k_max is required at real time")
        tau = -t.imag
        reach = math.sqrt(2.0 * cfg.hbar * abs(t) ** 2 * 40.0 / (cfg.m * tau))
        k_max = int(math.ceil(reach / (2.0 * cfg.L))) + 1
    px, sx = image_offsets_1d(float(x[0]), cfg.L, k_max)
    py, sy = image_offsets_1d(float(x[1]), cfg.L, k_max)
    return complex(_free_kernel_sum((px - x0[0]) ** 2, (py - x0[1]) ** 2, sx, sy, t, cfg))


def propagator_spectral(x0, x, t, cfg: BilliardConfig, n_max=None):
    """Box propagator as the eigenfunction expansion
    ``sum_n psi_n(x0) psi_n(x) exp(-i E_n t / hbar)``.

    Complex ``t`` with ``Im t < 0`` damps the tail; for real ``t`` the
    series does not converge and ``n_max`` must be given.
    """
    t = _check_time(t)
    w = cfg.hbar * math.pi ** 2 / (2.0 * cfg.m * cfg.L ** 2)
    if n_max is None:
        if t.imag == 0:
            raise DomainError("n_max is required at real time")
        n_max = int(math.ceil(math.sqrt(40.0 / (w * -t.imag)))) + 1
    n = np.arange(1, n_max + 1, dtype=float)
    k = math.pi / cfg.L
    ph = np.exp(-1j * w * t * n * n)
    sx = (2.0 / cfg.L) * np.sum(np.sin(n * k * x0[0]) * np.sin(n * k * x[0]) * ph)
    sy = (2.0 / cfg.L) * np.sum(np.sin(n * k * x0[1]) * np.sin(n * k * x[1]) * ph)
    return complex(sx * sy)


def short_time_density(x, t, spec: PacketSpec, cfg: BilliardConfig):
    """Free-particle density of an evolved Gaussian packet (no walls)."""
    if np.any(np.asarray(t) < 0):
        raise DomainError("t must be >= 0")
    m, hbar = cfg.m, cfg.hbar
    p = spec.params
    d = p.d
    xx, yy = x
    a = 2.0 * m ** 2 / (hbar ** 2 * t ** 2 / d ** 2 + 4.0 * d ** 2 * m ** 2)
    ex = (p.x0[0] - xx + p.p0[0] * t / m) ** 2 + (p.x0[1] - yy + p.p0[1] * t / m) ** 2
    z = math.pi * hbar ** 2 * t ** 2 / (2.0 * d ** 2 * m ** 2) + 2.0 * math.pi * d ** 2
    return abs(spec.weight) ** 2 * np.exp(-a * ex) / z


def hydrodynamic_fields(state: QuantumState, x, t, eta=None) -> HydroFields:
    """Density, velocity, current and quantum potential at an interior point.

    Raises
    ------
    NodeProximityError
        When ``|psi|^2`` falls below ``eta`` (default ``state.node_eta``).
    """
    xx, yy = float(x[0]), float(x[1])
    _check_in_box(state, xx, yy, strict=True)
    f = np.empty(6, np.complex128)
    _kernels.point_fields(state.A, state.B, *state.lead, state.cfg.L, state.omega, t - state.t_ref, xx, yy, f)
    eta = state.node_eta if eta is None else eta
    R = abs(f[0]) ** 2
    if R < eta:
        raise NodeProximityError(f"density {R:.3e} below node threshold {eta:.3e} at ({xx}, {yy})", R, eta)
    R, vx, vy, Q = _kernels.hydro_from_fields(f, state.cfg.hbar, state.cfg.m)
    v = np.array([vx, vy])
    return HydroFields(R, v, R * v, Q)


def q_finite_difference(state: QuantumState, x, t, h=None):
    """Quantum potential from central differences of ``|psi|`` (diagnostic).

    The default step is ``L / 1e5``.
    """
    h = state.cfg.L * 1e-5 if h is None else h
    xx, yy = float(x[0]), float(x[1])
    pts = np.array([[xx, yy], [xx + h, yy], [xx - h, yy], [xx, yy + h], [xx, yy - h]])
    amp = np.abs(evaluate_fields(state, pts, t)[:, 0])
    lap = (amp[1] + amp[2] + amp[3] + amp[4] - 4.0 * amp[0]) / h ** 2
    return -state.cfg.hbar ** 2 / (2.0 * state.cfg.m) * lap / amp[0]


def continuity_residual(state: QuantumState, x, t):
    """``dR/dt + div(R v)`` evaluated from analytic series derivatives."""
    f = evaluate_fields(state, np.array([x], dtype=float), t)[0]
    psi = f[0]
    dR = 2.0 * (np.conj(psi) * f[5]).real
    div_j = state.cfg.hbar / state.cfg.m * (np.conj(psi) * (f[3] + f[4])).imag
    return float(dR + div_j)


def hamilton_jacobi_residual(state: QuantumState, x, t):
    """Residual of ``dS/dt + |grad S|^2 / 2m + Q`` and the local energy scale.

    Returns ``(residual, scale)`` where ``scale`` is the largest magnitude
    among the three terms.
    """
    f = evaluate_fields(state, np.array([x], dtype=float), t)[0]
    hbar, m = state.cfg.hbar, state.cfg.m
    dS = hbar * (f[5] / f[0]).imag
    gS = hbar * np.array([(f[1] / f[0]).imag, (f[2] / f[0]).imag])
    kin = float(gS @ gS) / (2.0 * m)
    Q = _kernels.hydro_from_fields(f, hbar, m)[3]
    return float(dS + kin + Q), max(abs(dS), kin, abs(Q))


def _axis_functions(F, L, nodes):
    """Values and first derivatives of the per-rank axis functions."""
    k = math.pi / L
    n = np.arange(1, F.shape[1] + 1, dtype=float)
    arg = np.outer(n * k, nodes)
    scale = math.sqrt(2.0 / L)
    f = scale * (F @ np.sin(arg))
    df = scale * ((F * (n * k)) @ np.cos(arg))
    return f, df


def moments(state: QuantumState, t=None):
    """Position and momentum moments of the state at time ``t``.

    The density is a sum of products of axis functions, so every moment
    reduces to one-dimensional Gram integrals, evaluated with composite
    Gauss-Legendre quadrature fine enough to be exact for the band-limited
    integrands.  Returns a dict with keys ``x, x2, y, y2, px, px2, py,
    py2`` normalized by the state norm.
    """
    t = state.t_ref if t is None else t
    L, hbar = state.cfg.L, state.cfg.hbar
    ex, ey = state.axis_phases(t)
    out = {}
    grams = []
    for F, ph in ((state.A, ex), (state.B, ey)):
        kappa = 2.0 * F.shape[1] * math.pi / L
        nodes, w = gauss_legendre_nodes(0.0, L, max(16, math.ceil(L * kappa / 8.0)))
        f, df = _axis_functions(F * ph, L, nodes)
        fc = f.conj() * w
        grams.append({
            "1": fc @ f.T,
            "u": (fc * nodes) @ f.T,
            "u2": (fc * nodes ** 2) @ f.T,
            "p": -1j * hbar * (fc @ df.T),
            "p2": hbar ** 2 * ((df.conj() * w) @ df.T),
        })
    gx, gy = grams
    norm = np.real(np.sum(gx["1"] * gy["1"]))
    for key, name in (("u", ""), ("u2", "2")):
        out["x" + name] = float(np.real(np.sum(gx[key] * gy["1"])) / norm)
        out["y" + name] = float(np.real(np.sum(gx["1"] * gy[key])) / norm)
    out["px"] = float(np.real(np.sum(gx["p"] * gy["1"])) / norm)
    out["py"] = float(np.real(np.sum(gx["1"] * gy["p"])) / norm)
    out["px2"] = float(np.real(np.sum(gx["p2"] * gy["1"])) / norm)
    out["py2"] = float(np.real(np.sum(gx["1"] * gy["p2"])) / norm)
    return out
