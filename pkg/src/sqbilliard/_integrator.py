"""Compiled Dormand-Prince 5(4) integrator for the guidance equation.

The whole stepping loop runs in nopython mode; an ensemble call runs the
same routine per start point, so a batch of one reproduces a single
trajectory bit for bit.
"""
import numba
import numpy as np
from numba import njit, prange

# prefer OpenMP; the system TBB may be too old and only produces a warning
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from ._kernels import hydro_from_fields, point_fields, point_gradient

STATUS_OK = 0
STATUS_NODE_STALL = 1
STATUS_MAX_STEPS = 2
STATUS_BAD_START = 3

_MIN_SHARE = 1e-6

_C = np.array([0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
])
_B = np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0])
_E = np.array([-71.0 / 57600.0, 0.0, 71.0 / 16695.0, -71.0 / 1920.0, 17253.0 / 339200.0,
               -22.0 / 525.0, 1.0 / 40.0])
# dense output: y(t + th h) = y + h * sum_i K_i * sum_j P[i, j] th^(j+1)
_P = np.array([
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0, -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0, 87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0, -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0, 701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0, -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0, 69997945.0 / 29380423.0],
])


@njit(cache=True)
def _velocity(A, B, lx, ly, L, w, tau, x, y, hbar_m, eta, work):
    """Guidance velocity; returns ``(vx, vy, R, ok)`` with ``ok`` False at
    points outside the open box or where ``R < eta``."""
    if not (0.0 < x < L and 0.0 < y < L):
        return 0.0, 0.0, 0.0, False
    psi, px, py = point_gradient(A, B, lx, ly, L, w, tau, x, y,
                                 work[0], work[1], work[2], work[3], work[4], work[5])
    R = psi.real * psi.real + psi.imag * psi.imag
    if not (R >= eta):
        return 0.0, 0.0, R, False
    cp = np.conj(psi)
    return hbar_m * (cp * px).imag / R, hbar_m * (cp * py).imag / R, R, True


@njit(cache=True)
def _emit(K, h, th, y0x, y0y):
    """Dense-output position at fraction ``th`` of the step."""
    b = np.empty(7)
    for i in range(7):
        acc = 0.0
        pw = th
        for j in range(4):
            acc += _P[i, j] * pw
            pw *= th
        b[i] = acc
    sx = 0.0
    sy = 0.0
    for i in range(7):
        sx += K[i, 0] * b[i]
        sy += K[i, 1] * b[i]
    return y0x + h * sx, y0y + h * sy


@njit(cache=True)
def integrate(A, B, lx, ly, L, w, t_ref, hbar_m, x0, y0, t0, sample_times, rtol, atol,
              h_init, h_min, eta, max_steps, keep_raw, unit_step):
    """Integrate one trajectory and sample it at ``sample_times``.

    ``sample_times`` must be sorted, start at or after ``t0``.  With
    ``unit_step`` the error allowance of a step is scaled by its share
    ``h / (t_end - t0)`` of the span (at least ``_MIN_SHARE``), which makes
    the endpoint error proportional to the tolerance instead of growing with
    the step count.  Returns
    ``(samples (n, 2), n_done, status, steps, rejects, min_R, raw_t, raw_xy)``
    where ``n_done`` counts the samples reached before any failure.
    """
    n_s = sample_times.shape[0]
    out = np.full((n_s, 2), np.nan)
    R_ = A.shape[0]
    work = np.empty((6, R_), np.complex128)
    cap = 1024 if keep_raw else 1
    raw_t = np.empty(cap)
    raw_xy = np.empty((cap, 2))
    n_raw = 0
    K = np.zeros((7, 2))
    steps = 0
    rejects = 0
    t = t0
    yx = x0
    yy = y0
    vx, vy, R, ok = _velocity(A, B, lx, ly, L, w, t - t_ref, yx, yy, hbar_m, eta, work)
    min_R = R
    if not ok:
        return out, 0, STATUS_BAD_START, 0, 0, R, raw_t[:0], raw_xy[:0]
    K[0, 0] = vx
    K[0, 1] = vy
    if keep_raw:
        raw_t[0] = t
        raw_xy[0, 0] = yx
        raw_xy[0, 1] = yy
        n_raw = 1
    i_s = 0
    while i_s < n_s and sample_times[i_s] <= t0:
        out[i_s, 0] = yx
        out[i_s, 1] = yy
        i_s += 1
    t_end = sample_times[n_s - 1] if n_s > 0 else t0
    h = h_init
    if h <= 0.0:
        speed = np.sqrt(vx * vx + vy * vy)
        h = 1e-3 * L / max(speed, 1e-12 * L)
    status = STATUS_OK
    after_reject = False
    span = t_end - t0
    expo = 0.25 if unit_step else 0.2
    stage = np.zeros(2)
    while t < t_end:
        if steps >= max_steps:
            status = STATUS_MAX_STEPS
            break
        if h < h_min:
            status = STATUS_NODE_STALL
            break
        if t + h > t_end:
            h = t_end - t
        # stages 2..7
        good = True
        for s in range(1, 7):
            sx = 0.0
            sy = 0.0
            if s < 6:
                for j in range(s):
                    sx += _A[s, j] * K[j, 0]
                    sy += _A[s, j] * K[j, 1]
                ts = t + _C[s] * h
            else:
                for j in range(6):
                    sx += _B[j] * K[j, 0]
                    sy += _B[j] * K[j, 1]
                ts = t + h
            stage[0] = yx + h * sx
            stage[1] = yy + h * sy
            kx, ky, Rs, ok = _velocity(A, B, lx, ly, L, w, ts - t_ref, stage[0], stage[1], hbar_m, eta, work)
            if not ok:
                good = False
                break
            if Rs < min_R:
                min_R = Rs
            K[s, 0] = kx
            K[s, 1] = ky
        if not good:
            rejects += 1
            h *= 0.25
            after_reject = True
            continue
        nx = stage[0]
        ny = stage[1]
        ex = 0.0
        ey = 0.0
        for j in range(7):
            ex += _E[j] * K[j, 0]
            ey += _E[j] * K[j, 1]
        ex *= h
        ey *= h
        scx = atol + rtol * max(abs(yx), abs(nx))
        scy = atol + rtol * max(abs(yy), abs(ny))
        if unit_step:
            # floored so that micro-steps near a node are not asked for
            # accuracy below the roundoff of the velocity evaluation
            share = max(h / span, _MIN_SHARE)
            scx *= share
            scy *= share
        err = np.sqrt(0.5 * ((ex / scx) ** 2 + (ey / scy) ** 2))
        if err > 1.0:
            rejects += 1
            h *= max(0.2, 0.9 * err ** -expo)
            after_reject = True
            continue
        t_new = t + h
        if t_new >= t_end or t_end - t_new <= 4e-16 * abs(t_end):
            t_new = t_end
        while i_s < n_s and sample_times[i_s] <= t_new:
            th = (sample_times[i_s] - t) / h
            px_, py_ = _emit(K, h, th, yx, yy)
            out[i_s, 0] = px_
            out[i_s, 1] = py_
            i_s += 1
        t = t_new
        yx = nx
        yy = ny
        K[0, 0] = K[6, 0]
        K[0, 1] = K[6, 1]
        steps += 1
        if keep_raw:
            if n_raw == raw_t.shape[0]:
                nt = np.empty(2 * n_raw)
                nxy = np.empty((2 * n_raw, 2))
                nt[:n_raw] = raw_t
                nxy[:n_raw] = raw_xy
                raw_t = nt
                raw_xy = nxy
            raw_t[n_raw] = t
            raw_xy[n_raw, 0] = yx
            raw_xy[n_raw, 1] = yy
            n_raw += 1
        if err == 0.0:
            fac = 5.0
        else:
            fac = min(5.0, max(0.2, 0.9 * err ** -expo))
        if after_reject:
            fac = min(fac, 1.0)
            after_reject = False
        h *= fac
    return out, i_s, status, steps, rejects, min_R, raw_t[:n_raw], raw_xy[:n_raw]


@njit(cache=True, parallel=True)
def integrate_batch(A, B, lx, ly, L, w, t_ref, hbar_m, starts, t0, sample_times, rtol, atol,
                    h_init, h_min, eta, max_steps, unit_step):
    """Run :func:`integrate` for every start point; no raw steps kept.

    Start points are distributed over the numba thread pool; each one is
    integrated independently, so results do not depend on the thread count.
    """
    n = starts.shape[0]
    n_s = sample_times.shape[0]
    pos = np.empty((n, n_s, 2))
    status = np.empty(n, np.int64)
    stats = np.empty((n, 3))
    for i in prange(n):
        o, _, st, steps, rej, mr, _rt, _rxy = integrate(
            A, B, lx, ly, L, w, t_ref, hbar_m, starts[i, 0], starts[i, 1], t0, sample_times,
            rtol, atol, h_init, h_min, eta, max_steps, False, unit_step)
        pos[i] = o
        status[i] = st
        stats[i, 0] = steps
        stats[i, 1] = rej
        stats[i, 2] = mr
    return pos, status, stats


@njit(cache=True)
def sample_fields(A, B, lx, ly, L, w, t_ref, hbar, m, ts, pts):
    """``(R, vx, vy, Q)`` at each sampled point; NaN rows stay NaN."""
    n = ts.shape[0]
    out = np.full((n, 4), np.nan)
    f = np.empty(6, np.complex128)
    for i in range(n):
        x = pts[i, 0]
        y = pts[i, 1]
        if np.isnan(x) or np.isnan(y):
            continue
        point_fields(A, B, lx, ly, L, w, ts[i] - t_ref, x, y, f)
        R, vx, vy, Q = hydro_from_fields(f, hbar, m)
        out[i, 0] = R
        out[i, 1] = vx
        out[i, 2] = vy
        out[i, 3] = Q
    return out
