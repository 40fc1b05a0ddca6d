import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sqbilliard import BilliardConfig, DomainError, NodeProximityError, TruncationError
from sqbilliard.classical import GaussianEnsembleParams, classical_density_free
from sqbilliard.quantum import (
    PacketSpec,
    QuantumState,
    continuity_residual,
    eigen_energy,
    evaluate_fields,
    evaluate_psi,
    evolve,
    hamilton_jacobi_residual,
    hydrodynamic_fields,
    moments,
    packet_amplitude,
    project,
    project_grid,
    propagator_images,
    propagator_spectral,
    psi_grid,
    q_finite_difference,
    short_time_density,
)

# converged cutoff of the (d = 0.5, p = (4, 8)) packet at (4, 5.5)
SLOW_N_MAX = (32, 44)
SLOW_LEAD = (1, 7)


def eigenstate(n_x, n_y, cfg, size=8):
    A = np.zeros((1, size), complex)
    B = np.zeros((1, size), complex)
    A[0, n_x - 1] = 1.0
    B[0, n_y - 1] = 1.0
    return QuantumState(A, B, cfg)


def test_eigen_energy_values(cfg):
    assert eigen_energy((1, 1), cfg) == pytest.approx(math.pi ** 2 / 100, rel=1e-15)
    assert eigen_energy((2, 1), cfg) == eigen_energy((1, 2), cfg)
    big = BilliardConfig(L=20.0)
    assert eigen_energy((3, 5), big) == pytest.approx(eigen_energy((3, 5), cfg) / 4, rel=1e-15)
    with pytest.raises(DomainError):
        eigen_energy((0, 1), cfg)


def test_packet_peak_and_norm(cfg, slow_params):
    spec = PacketSpec(slow_params)
    d = slow_params.d
    assert abs(packet_amplitude(spec, slow_params.x0, cfg)) == pytest.approx(1 / (d * math.sqrt(2 * math.pi)), rel=1e-14)
    u = np.linspace(-6, 16, 2201)
    h = u[1] - u[0]
    X, Y = np.meshgrid(u, u, indexing="ij")
    assert np.sum(np.abs(packet_amplitude(spec, (X, Y), cfg)) ** 2) * h * h == pytest.approx(1.0, abs=1e-10)


def test_packet_momentum_moments(cfg, slow_params):
    # quadrature of psi* (-i d/dx) psi in one dimension, analytic derivative
    p = slow_params
    u = np.linspace(p.x0[0] - 10, p.x0[0] + 10, 40001)
    h = u[1] - u[0]
    psi = packet_amplitude(PacketSpec(p), (u, p.x0[1]), cfg)
    dpsi = psi * (-(u - p.x0[0]) / (2 * p.d ** 2) + 1j * p.p0[0])
    norm = np.sum(np.abs(psi) ** 2) * h
    px = np.real(np.sum(psi.conj() * -1j * dpsi) * h) / norm
    px2 = np.sum(np.abs(dpsi) ** 2) * h / norm
    assert px == pytest.approx(p.p0[0], rel=1e-6)
    assert px2 == pytest.approx(p.p0[0] ** 2 + 1 / (4 * p.d ** 2), rel=1e-6)


def test_project_grid_eigenstate_delta(cfg):
    M = 63
    g = cfg.L * np.arange(1, M + 1) / (M + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    vals = (2 / cfg.L) * np.sin(2 * math.pi * X / cfg.L) * np.sin(3 * math.pi * Y / cfg.L)
    s = project_grid(vals, cfg)
    c = s.coeffs
    target = np.zeros_like(c)
    target[1, 2] = 1.0
    assert np.max(np.abs(c - target)) < 1e-12


def test_project_converges_with_frozen_cutoff(slow_state):
    assert slow_state.n_max == SLOW_N_MAX
    assert slow_state.lead == SLOW_LEAD
    assert slow_state.rank == 1
    assert slow_state.norm() >= (1 - 1e-8) * slow_state.norm_ref


def test_project_doubling_is_stable(cfg, slow_params, slow_state):
    a = project([PacketSpec(slow_params)], cfg, n_max=slow_state.n_max).coeffs
    b = project([PacketSpec(slow_params)], cfg, n_max=tuple(2 * n for n in slow_state.n_max)).coeffs
    assert np.max(np.abs(b[: a.shape[0], : a.shape[1]] - a)) < 1e-12


def test_leading_mode_truncation_within_budget(cfg, slow_params, slow_state):
    full = project([PacketSpec(slow_params)], cfg, n_max=slow_state.n_max)
    assert full.lead == (1, 1)
    diff = full.coeffs - slow_state.coeffs
    assert np.sum(np.abs(diff) ** 2) <= 0.25 * slow_state.eps_trunc
    # the banded evaluators agree with the full ones up to the dropped modes
    pts = np.random.default_rng(3).uniform(0.5, 9.5, size=(40, 2))
    fa = evaluate_fields(full, pts, 1.3)[:, 0]
    fb = evaluate_fields(slow_state, pts, 1.3)[:, 0]
    assert np.max(np.abs(fa - fb)) < 1e-4


def test_banded_kernel_equals_dense_sum(slow_state):
    # the kernels skip leading zero columns; the dense grid evaluator does not
    xs = np.linspace(0.3, 9.7, 11)
    ys = np.linspace(0.2, 9.9, 13)
    dense = psi_grid(slow_state, xs, ys, 0.7)
    pts = np.array([(x, y) for x in xs for y in ys])
    banded = evaluate_fields(slow_state, pts, 0.7)[:, 0].reshape(xs.size, ys.size)
    np.testing.assert_allclose(banded, dense, atol=1e-12)


def test_truncation_error_reports(cfg, slow_params):
    with pytest.raises(TruncationError) as info:
        project([PacketSpec(slow_params)], cfg, n_max=8)
    e = info.value
    assert e.achieved < e.reference
    assert e.suggested_n_max == SLOW_N_MAX


def test_leakage_warning(cfg):
    near = GaussianEnsembleParams((1.0, 5.0), (0.0, 0.0), 0.5, 0.5)
    with pytest.warns(RuntimeWarning, match="widths from a wall"):
        project([PacketSpec(near)], cfg, eps_trunc=1e-3)


def test_evolve_identity_and_unitarity(slow_state):
    s0 = evolve(slow_state, 0.0)
    np.testing.assert_array_equal(s0.coeffs, slow_state.coeffs)
    s1 = evolve(slow_state, 123.456)
    assert s1.norm() == pytest.approx(slow_state.norm(), rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_evolve_group_property(slow_state, t1, t2):
    a = evolve(evolve(slow_state, t1), t2)
    b = evolve(slow_state, t1 + t2)
    scale = np.abs(slow_state.coeffs).max()
    # phases w n^2 t lose ~|t| w n^2 eps of absolute accuracy
    assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-11 * scale * (1 + abs(t1) + abs(t2))


def test_evolved_state_evaluates_same_history(slow_state):
    later = evolve(slow_state, 2.5)
    x = (3.3, 6.1)
    assert evaluate_psi(later, x, 4.0)[0] == pytest.approx(evaluate_psi(slow_state, x, 4.0)[0], abs=1e-12)


def test_dirichlet_on_walls(slow_state):
    for t in (0.0, 1.0, 7.0):
        for x in [(0.0, 3.0), (10.0, 4.2), (6.0, 0.0), (2.5, 10.0)]:
            assert abs(evaluate_psi(slow_state, x, t)[0]) < 1e-12


def test_ground_state_centre(cfg):
    s = eigenstate(1, 1, cfg)
    psi, grad, dt = evaluate_psi(s, (5.0, 5.0), 0.0)
    assert psi == pytest.approx(2 / cfg.L, rel=1e-14)
    assert np.max(np.abs(grad)) < 1e-15
    assert dt == pytest.approx(-1j * eigen_energy((1, 1), cfg) / cfg.hbar * psi, rel=1e-14)


def test_evaluate_outside_box(slow_state):
    with pytest.raises(DomainError):
        evaluate_psi(slow_state, (10.5, 1.0), 0.0)


def test_finite_difference_derivatives(slow_state):
    rng = np.random.default_rng(42)
    pts = rng.uniform(0.5, 9.5, size=(100, 2))
    ts = rng.uniform(0.0, 5.0, size=100)
    h = 1e-5
    an = np.array([np.concatenate([[g] for g in evaluate_psi(slow_state, x, t)[1]] +
                                  [[evaluate_psi(slow_state, x, t)[2]]]) for x, t in zip(pts, ts)])
    fd = np.empty_like(an)
    for i, (x, t) in enumerate(zip(pts, ts)):
        f = lambda dx, dy, dt: evaluate_psi(slow_state, (x[0] + dx, x[1] + dy), t + dt)[0]
        fd[i, 0] = (f(h, 0, 0) - f(-h, 0, 0)) / (2 * h)
        fd[i, 1] = (f(0, h, 0) - f(0, -h, 0)) / (2 * h)
        fd[i, 2] = (f(0, 0, h) - f(0, 0, -h)) / (2 * h)
    for k in range(3):
        assert np.max(np.abs(fd[:, k] - an[:, k])) < 1e-6 * np.max(np.abs(an[:, k]))


def test_fields_batch_matches_point(slow_state):
    pts = np.array([[1.0, 2.0], [7.5, 3.3]])
    f = evaluate_fields(slow_state, pts, 0.8)
    for row, x in zip(f, pts):
        psi, grad, dt = evaluate_psi(slow_state, x, 0.8)
        assert row[0] == psi
        np.testing.assert_array_equal(row[1:3], grad)
        assert row[5] == dt


# complex times with a damping part; the image and mode sums both converge there
_SCALE = 100.0 / math.pi ** 2


@pytest.mark.parametrize("t", [(0.1 - 0.05j) * _SCALE, (1.0 - 0.05j) * _SCALE, (5.0 - 0.05j) * _SCALE])
def test_kernel_images_equal_spectral(cfg, t):
    rng = np.random.default_rng(1)
    for _ in range(20):
        x0, x = rng.uniform(0.1, 9.9, 2), rng.uniform(0.1, 9.9, 2)
        a = propagator_images(x0, x, t, cfg)
        b = propagator_spectral(x0, x, t, cfg)
        assert abs(a - b) < 1e-6 * abs(b)


def test_kernel_short_time_is_free(cfg):
    t = 0.01 - 0.01j
    x0, x = (4.0, 5.0), (4.3, 5.2)
    free = cfg.m / (2 * math.pi * cfg.hbar * t) * np.exp(-0.5j * math.pi) * np.exp(
        1j * cfg.m * (0.3 ** 2 + 0.2 ** 2) / (2 * cfg.hbar * t))
    assert propagator_images(x0, x, t, cfg) == pytest.approx(free, rel=1e-12)


def test_kernel_vanishes_on_wall(cfg):
    t = (1.0 - 0.05j) * _SCALE
    k0 = abs(propagator_images((3.0, 4.0), (5.0, 5.0), t, cfg))
    assert abs(propagator_images((3.0, 4.0), (0.0, 5.0), t, cfg)) < 1e-12 * k0
    assert abs(propagator_images((3.0, 4.0), (2.0, 10.0), t, cfg)) < 1e-12 * k0


def test_kernel_time_domain(cfg):
    with pytest.raises(DomainError):
        propagator_images((1, 1), (2, 2), 0.0, cfg)
    with pytest.raises(DomainError):
        propagator_images((1, 1), (2, 2), -1.0, cfg)
    with pytest.raises(DomainError):
        propagator_images((1, 1), (2, 2), 1.0, cfg)   # real time needs an explicit k_max
    with pytest.raises(DomainError):
        propagator_spectral((1, 1), (2, 2), 1.0 + 0.1j, cfg)


def test_short_time_density_peak(cfg, slow_params):
    spec = PacketSpec(slow_params)
    assert short_time_density(slow_params.x0, 0.0, spec, cfg) == pytest.approx(
        1 / (2 * math.pi * slow_params.d ** 2), rel=1e-15)


@given(st.floats(-20, 30), st.floats(-20, 30), st.floats(0, 100), st.floats(0.1, 2.0))
def test_short_time_density_equals_classical(cfg, x, y, t, d):
    p = GaussianEnsembleParams((4.0, 5.0), (3.0, -2.0), d, d)
    q = short_time_density((x, y), t, PacketSpec(p), cfg)
    c = classical_density_free((x, y), t, p, cfg)
    # rounding in the exponent is amplified by its size in the tails
    eps = np.finfo(float).eps
    if c == 0.0:
        assert q < 1e-300
        return
    assert abs(q - c) <= 64 * eps * (1 + abs(math.log(c))) * c


def test_spectral_density_matches_free_before_walls(cfg, slow_params, slow_state):
    spec = PacketSpec(slow_params)
    xs = np.linspace(0.1, 9.9, 64)
    for t in (0.0, 0.02, 0.05, 0.08, 0.1):
        q = np.abs(psi_grid(slow_state, xs, xs, t)) ** 2
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        f = short_time_density((X, Y), t, spec, cfg)
        assert np.max(np.abs(q - f)) < 1e-3 * f.max()


def test_eigenstate_has_no_current(cfg):
    s = eigenstate(2, 3, cfg)
    for x in [(1.0, 1.0), (3.3, 7.1), (8.0, 2.0)]:
        h = hydrodynamic_fields(s, x, 4.2)
        assert np.all(np.abs(h.v) < 1e-12)
        assert np.all(np.abs(h.j) < 1e-12)


def test_packet_centre_velocity(cfg, slow_params, slow_state):
    t = 0.05
    c = (slow_params.x0[0] + slow_params.p0[0] * t, slow_params.x0[1] + slow_params.p0[1] * t)
    v = hydrodynamic_fields(slow_state, c, t).v
    np.testing.assert_allclose(v, np.array(slow_params.p0) / cfg.m, rtol=1e-3)


def test_node_proximity(cfg):
    s = eigenstate(2, 1, cfg)
    with pytest.raises(NodeProximityError) as info:
        hydrodynamic_fields(s, (5.0, 3.0), 0.0)
    assert info.value.density < info.value.threshold
    with pytest.raises(DomainError):
        hydrodynamic_fields(s, (0.0, 3.0), 0.0)


def test_quantum_potential_analytic_vs_fd(slow_state):
    for x, t in [((4.2, 5.3), 0.0), ((5.0, 6.0), 0.2), ((4.5, 7.0), 0.3)]:
        qa = hydrodynamic_fields(slow_state, x, t).Q
        assert q_finite_difference(slow_state, x, t) == pytest.approx(qa, rel=1e-4, abs=1e-6)


def test_ground_state_quantum_potential(cfg):
    # for a real eigenstate Q equals the eigenenergy
    s = eigenstate(1, 1, cfg)
    assert hydrodynamic_fields(s, (3.0, 6.0), 0.0).Q == pytest.approx(eigen_energy((1, 1), cfg), rel=1e-12)


def test_residuals_small(slow_state):
    T = 5.0
    rng = np.random.default_rng(9)
    Rmax = float(np.max(np.abs(psi_grid(slow_state, np.linspace(0, 10, 201), np.linspace(0, 10, 201), 0.0)) ** 2))
    for _ in range(50):
        x, t = rng.uniform(0.5, 9.5, 2), rng.uniform(0, 5 * T)
        assert abs(continuity_residual(slow_state, x, t)) < 1e-6 * Rmax / T
        if abs(evaluate_psi(slow_state, x, t)[0]) ** 2 > 10 * slow_state.node_eta:
            r, scale = hamilton_jacobi_residual(slow_state, x, t)
            assert abs(r) < 1e-4 * scale


def test_moments_reproduce_packet(slow_params, slow_state):
    m = moments(slow_state, 0.0)
    ref = slow_params.moments()
    for k in ref:
        assert m[k] == pytest.approx(ref[k], rel=1e-4)
