"""Compiled pointwise evaluators for low-rank sine-series wavefunctions.

A state is held as factor matrices ``A`` (rank x Nx) and ``B`` (rank x Ny)
so that the coefficient of ``sin(n k x) sin(m k y)`` is
``sum_r A[r, n-1] B[r, m-1]``.  Energies are separable, so the time
dependence multiplies column ``n`` of ``A`` by ``exp(-1j w n^2 tau)`` and
likewise for ``B``.  Evaluating a point therefore costs
``O(rank (Nx + Ny))``.

Sines, cosines and phases are advanced by rotation recurrences and reseeded
from direct trigonometric calls every ``_RESEED`` terms, which keeps the
accumulated rounding at the level of a few ulps.
"""
import numpy as np
from numba import njit

_RESEED = 16


@njit(cache=True)
def _axis_sums(A, lo, u, k, w, tau, F, F1, F2, second):
    """Per-rank sums along one axis.

    ``F = sum A e s``, ``F1 = sum A e n c``, ``F2 = sum A e n^2 s`` with
    ``s = sin(n k u)``, ``c = cos(n k u)``, ``e = exp(-1j w n^2 tau)``.
    ``F2`` is skipped when ``second`` is False.  Columns before ``lo``
    (1-based) are known to be zero and skipped.
    """
    R, N = A.shape
    for r in range(R):
        F[r] = 0.0
        F1[r] = 0.0
        F2[r] = 0.0
    th = k * u
    c1 = np.cos(th)
    s1 = np.sin(th)
    rot2 = np.exp(-2.0j * w * tau)
    s = 0.0
    c = 0.0
    e = 0.0 + 0.0j
    ratio = 0.0 + 0.0j
    for n in range(lo, N + 1):
        if (n - lo) % _RESEED == 0:
            s = np.sin(n * th)
            c = np.cos(n * th)
            e = np.exp(-1.0j * (w * tau) * (n * n))
            ratio = np.exp(-1.0j * (w * tau) * (2 * n + 1))
        es = e * s
        enc = e * (n * c)
        for r in range(R):
            a = A[r, n - 1]
            F[r] += a * es
            F1[r] += a * enc
            if second:
                F2[r] += a * (es * (n * n))
        # advance to n + 1
        s, c = s * c1 + c * s1, c * c1 - s * s1
        e = e * ratio
        ratio = ratio * rot2


@njit(cache=True)
def point_fields(A, B, lx, ly, L, w, tau, x, y, out):
    """Fill ``out`` with ``psi, psi_x, psi_y, psi_xx, psi_yy, psi_t``.

    ``psi_t`` is returned as ``dpsi/dt`` of the Schroedinger evolution,
    i.e. ``-1j w sum (n^2 + m^2) ...``.
    """
    R = A.shape[0]
    k = np.pi / L
    F = np.empty(R, np.complex128)
    F1 = np.empty(R, np.complex128)
    F2 = np.empty(R, np.complex128)
    G = np.empty(R, np.complex128)
    G1 = np.empty(R, np.complex128)
    G2 = np.empty(R, np.complex128)
    _axis_sums(A, lx, x, k, w, tau, F, F1, F2, True)
    _axis_sums(B, ly, y, k, w, tau, G, G1, G2, True)
    psi = 0.0j
    px = 0.0j
    py = 0.0j
    pxx = 0.0j
    pyy = 0.0j
    for r in range(R):
        psi += F[r] * G[r]
        px += F1[r] * G[r]
        py += F[r] * G1[r]
        pxx += F2[r] * G[r]
        pyy += F[r] * G2[r]
    norm = 2.0 / L
    out[0] = norm * psi
    out[1] = norm * k * px
    out[2] = norm * k * py
    out[3] = -norm * k * k * pxx
    out[4] = -norm * k * k * pyy
    out[5] = -1.0j * w * norm * (pxx + pyy)


@njit(cache=True)
def point_gradient(A, B, lx, ly, L, w, tau, x, y, F, F1, F2, G, G1, G2):
    """Return ``(psi, psi_x, psi_y)`` using caller-provided work arrays."""
    R = A.shape[0]
    k = np.pi / L
    _axis_sums(A, lx, x, k, w, tau, F, F1, F2, False)
    _axis_sums(B, ly, y, k, w, tau, G, G1, G2, False)
    psi = 0.0j
    px = 0.0j
    py = 0.0j
    for r in range(R):
        psi += F[r] * G[r]
        px += F1[r] * G[r]
        py += F[r] * G1[r]
    norm = 2.0 / L
    return norm * psi, norm * k * px, norm * k * py


@njit(cache=True)
def batch_fields(A, B, lx, ly, L, w, taus, xs, ys):
    """:func:`point_fields` at many points; returns an ``(n, 6)`` array."""
    n = xs.shape[0]
    out = np.empty((n, 6), np.complex128)
    buf = np.empty(6, np.complex128)
    for i in range(n):
        point_fields(A, B, lx, ly, L, w, taus[i], xs[i], ys[i], buf)
        for j in range(6):
            out[i, j] = buf[j]
    return out


@njit(cache=True)
def hydro_from_fields(f, hbar, m):
    """``(R, vx, vy, Q)`` from the six field values of :func:`point_fields`."""
    psi = f[0]
    R = psi.real * psi.real + psi.imag * psi.imag
    cpsi = np.conj(psi)
    gx = cpsi * f[1]
    gy = cpsi * f[2]
    vx = hbar / m * gx.imag / R
    vy = hbar / m * gy.imag / R
    lap = (cpsi * (f[3] + f[4])).real / R
    grad2 = (abs(f[1]) ** 2 + abs(f[2]) ** 2) / R
    cross = (gx.real ** 2 + gy.real ** 2) / (R * R)
    Q = -hbar * hbar / (2.0 * m) * (lap + grad2 - cross)
    return R, vx, vy, Q


@njit(cache=True)
def batch_density(A, B, lx, ly, L, w, tau, xs, ys):
    """``|psi|^2`` at many points sharing one time."""
    n = xs.shape[0]
    R = A.shape[0]
    k = np.pi / L
    out = np.empty(n)
    F = np.empty(R, np.complex128)
    F1 = np.empty(R, np.complex128)
    F2 = np.empty(R, np.complex128)
    G = np.empty(R, np.complex128)
    G1 = np.empty(R, np.complex128)
    G2 = np.empty(R, np.complex128)
    norm = 2.0 / L
    for i in range(n):
        _axis_sums(A, lx, xs[i], k, w, tau, F, F1, F2, False)
        _axis_sums(B, ly, ys[i], k, w, tau, G, G1, G2, False)
        psi = 0.0j
        for r in range(R):
            psi += F[r] * G[r]
        psi *= norm
        out[i] = psi.real * psi.real + psi.imag * psi.imag
    return out
