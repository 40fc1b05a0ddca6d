import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sqbilliard import DomainError
from sqbilliard.analysis import grid_from_field, l1_distance
from sqbilliard.classical import (
    ClassicalState,
    GaussianEnsembleParams,
    classical_density_boxed,
    classical_density_free,
    default_k_max,
    detect_periodic,
    ensemble_histogram,
    orbit_polyline,
    po_period,
    propagate_arrays,
    propagate_classical,
    return_period,
    sample_ensemble,
)
from sqbilliard.geometry import image_points

coord = st.floats(0.0, 10.0)
# the momentum sign is a convention at the exact wall instant, so momentum checks start inside
inner = st.floats(1e-6, 10.0 - 1e-6)
mom = st.floats(-50.0, 50.0)
dt = st.floats(0.0, 500.0)


def test_free_interior_motion(cfg):
    s = propagate_classical(ClassicalState((5.0, 5.0), (1.0, 0.0)), 3.0, cfg)
    assert s.x == pytest.approx((8.0, 5.0))
    assert s.p == (1.0, 0.0)
    assert s.t == 3.0


def test_one_bounce(cfg):
    s = propagate_classical(ClassicalState((5.0, 5.0), (1.0, 0.0)), 7.0, cfg)
    assert s.x == pytest.approx((8.0, 5.0))
    assert s.p == (-1.0, 0.0)


def test_negative_dt_rejected(cfg):
    with pytest.raises(DomainError):
        propagate_classical(ClassicalState((5.0, 5.0), (1.0, 0.0)), -1.0, cfg)


@given(coord, coord, mom, mom, dt)
def test_energy_conserved_exactly(cfg, x, y, px, py, t):
    s = propagate_classical(ClassicalState((x, y), (px, py)), t, cfg)
    assert s.energy_factor == px * px + py * py
    assert cfg.contains(*s.x)


@given(inner, inner, mom, mom, dt)
def test_reversibility(cfg, x, y, px, py, t):
    s = propagate_classical(ClassicalState((x, y), (px, py)), t, cfg)
    back = propagate_classical(ClassicalState(s.x, (-s.p[0], -s.p[1])), t, cfg)
    assert back.x == pytest.approx((x, y), abs=1e-9 * (1 + abs(px * t) + abs(py * t)))
    assert (-back.p[0], -back.p[1]) == pytest.approx((px, py))


@given(st.lists(st.tuples(coord, coord, mom, mom), min_size=1, max_size=10), dt)
def test_propagate_arrays_matches_scalar(cfg, rows, t):
    a = np.array(rows)
    xs, ps = propagate_arrays(a[:, :2], a[:, 2:], t, cfg)
    for r, xa, pa in zip(rows, xs, ps):
        s = propagate_classical(ClassicalState(r[:2], r[2:]), t, cfg)
        np.testing.assert_allclose(xa, s.x, atol=1e-12)
        np.testing.assert_array_equal(pa, s.p)


@pytest.mark.parametrize("p, expected", [((1.0, 2.0), (2, 1)), ((1.0, 1.0), (1, 1)), ((3.0, 0.0), (0, 1)),
                                         ((0.0, 2.0), (1, 0)), ((-2.0, 6.0), (3, 1))])
def test_detect_periodic(p, expected):
    assert detect_periodic(p) == expected


def test_detect_periodic_golden_ratio_none():
    assert detect_periodic((1.0, (1 + math.sqrt(5)) / 2), tol=1e-12, max_denominator=10**6) is None


def test_detect_periodic_zero():
    with pytest.raises(DomainError):
        detect_periodic((0.0, 0.0))


def test_po_period_values(cfg):
    assert po_period(1, 1, (1.0, 1.0), cfg) == pytest.approx(10.0)
    assert po_period(2, 1, (1.0, 2.0), cfg) == pytest.approx(10.0)
    assert po_period(2, 1, (2.0, 4.0), cfg) == pytest.approx(5.0)
    with pytest.raises(DomainError):
        po_period(1, 1, (0.0, 0.0), cfg)


def test_return_period_is_first_phase_space_return(cfg):
    # the (2,1) orbit with p = (1, 2) needs 20 time units to close in phase space
    T = return_period((1.0, 2.0), cfg)
    assert T == pytest.approx(20.0)
    s0 = ClassicalState((3.0, 1.0), (1.0, 2.0))
    half = propagate_classical(s0, 10.0, cfg)
    assert half.p != s0.p or half.x != pytest.approx(s0.x)
    back = propagate_classical(s0, T, cfg)
    assert back.x == pytest.approx(s0.x, abs=1e-12)


@settings(max_examples=50)
@given(st.integers(1, 7), st.integers(1, 7), st.floats(0.5, 50.0), inner, inner)
def test_periodic_orbit_returns(cfg, a, b, scale, x, y):
    g = math.gcd(a, b)
    a, b = a // g, b // g
    p = (scale * b, scale * a)          # p_x / p_y = n_y / n_x with (n_x, n_y) = (a, b)
    assert detect_periodic(p) == (a, b)
    s = propagate_classical(ClassicalState((x, y), p), return_period(p, cfg), cfg)
    assert s.x == pytest.approx((x, y), abs=1e-9 * cfg.L)
    assert s.p == pytest.approx(p)


def test_orbit_polyline_vertices(cfg):
    poly = orbit_polyline((5.0, 5.0), (1.0, 0.0), 20.0, cfg)
    np.testing.assert_allclose(poly, [[5, 5], [10, 5], [0, 5], [5, 5]], atol=1e-12)


def test_moments_and_variance_product():
    for d in (0.25, 0.5, 1.0):
        mo = GaussianEnsembleParams((1.0, 2.0), (3.0, 4.0), d, d).moments()
        var_x = mo["x2"] - mo["x"] ** 2
        var_p = mo["px2"] - mo["px"] ** 2
        assert var_x * var_p == pytest.approx(0.25, rel=1e-14)


def test_params_validation():
    with pytest.raises(DomainError):
        GaussianEnsembleParams((1, 1), (0, 0), 0.0, 1.0)
    with pytest.raises(DomainError):
        GaussianEnsembleParams((1, 1), (0, 0), 1.0, -1.0)


def test_sample_ensemble_moments():
    p = GaussianEnsembleParams((5.0, 5.0), (4.0, 8.0), 0.5, 0.5)
    n = 10**6
    e = sample_ensemble(p, n, seed=7)
    assert len(e) == n
    se_x = p.d / math.sqrt(n)
    se_p = p.momentum_std / math.sqrt(n)
    assert abs(e.x[:, 0].mean() - 5.0) < 5 * se_x
    assert abs(e.p[:, 1].mean() - 8.0) < 5 * se_p
    # variance standard error for a normal sample: sigma^2 sqrt(2/n)
    assert abs(e.x[:, 0].var() - p.d ** 2) < 5 * p.d ** 2 * math.sqrt(2 / n)
    assert abs(e.p[:, 0].var() - 1 / (4 * p.Delta ** 2)) < 5 * p.momentum_std ** 2 * math.sqrt(2 / n)


def test_sample_ensemble_deterministic():
    p = GaussianEnsembleParams((5.0, 5.0), (4.0, 8.0), 0.5, 0.5)
    a, b = sample_ensemble(p, 100, 3), sample_ensemble(p, 100, 3)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.p, b.p)
    with pytest.raises(DomainError):
        sample_ensemble(p, 0, 3)


def test_free_density_peak_and_motion(cfg, slow_params):
    p = slow_params
    assert classical_density_free(p.x0, 0.0, p, cfg) == pytest.approx(1 / (2 * math.pi * p.d ** 2), rel=1e-14)
    t = 0.3
    c = (p.x0[0] + p.p0[0] * t, p.x0[1] + p.p0[1] * t)
    peak = classical_density_free(c, t, p, cfg)
    for dx, dy in ((1e-3, 0), (0, 1e-3), (-1e-3, 0), (0, -1e-3)):
        assert classical_density_free((c[0] + dx, c[1] + dy), t, p, cfg) < peak


def test_free_density_normalized(cfg, slow_params):
    t = 2.0
    u = np.linspace(-40, 60, 4001)
    h = u[1] - u[0]
    X, Y = np.meshgrid(u, u, indexing="ij")
    assert classical_density_free((X, Y), t, slow_params, cfg).sum() * h * h == pytest.approx(1.0, abs=1e-6)


def test_boxed_equals_free_deep_inside(cfg, slow_params):
    pts = np.random.default_rng(0).uniform(3.0, 6.5, size=(50, 2))
    f = classical_density_free((pts[:, 0], pts[:, 1]), 0.0, slow_params, cfg)
    b = classical_density_boxed((pts[:, 0], pts[:, 1]), 0.0, slow_params, cfg)
    np.testing.assert_allclose(b, f, rtol=1e-12)


def test_boxed_matches_bruteforce_image_sum(cfg, slow_params):
    # the separable product must equal the planar sum over all images
    t = 1.7
    k = default_k_max(slow_params, t, cfg)
    for x in [(1.0, 2.0), (9.5, 0.3), (5.0, 5.0)]:
        brute = sum(classical_density_free(img, t, slow_params, cfg) for img, _ in image_points(x, cfg.L, k))
        assert classical_density_boxed(x, t, slow_params, cfg) == pytest.approx(brute, rel=1e-12)


@pytest.mark.parametrize("t", [0.0, 3.0, 40.0])
def test_boxed_normalized(cfg, slow_params, t):
    g = grid_from_field(lambda X, Y: classical_density_boxed((X, Y), t, slow_params, cfg), 200, 200, cfg, 2)
    assert g.mass == pytest.approx(1.0, abs=1e-4)


def test_boxed_uniform_at_long_times(cfg, slow_params):
    T = return_period(slow_params.p0, cfg)
    g = grid_from_field(lambda X, Y: classical_density_boxed((X, Y), t=100 * T, params=slow_params, cfg=cfg),
                        64, 64, cfg)
    assert np.max(np.abs(g.values * cfg.L ** 2 - 1.0)) < 0.05


def test_histogram_vs_analytic_t0(cfg, slow_params):
    e = sample_ensemble(slow_params, 10**6, seed=11)
    h = ensemble_histogram(e, 0.0, 64, cfg)
    assert h.mass == pytest.approx(1.0, abs=1e-12)
    a = grid_from_field(lambda X, Y: classical_density_boxed((X, Y), 0.0, slow_params, cfg), 64, 64, cfg, 4)
    assert l1_distance(h, a) < 0.02


def test_histogram_peak_near_start_after_one_period(cfg):
    # fast enough that the spread after one period stays near d
    fast = GaussianEnsembleParams((4.0, 5.5), (40.0, 80.0), 0.5, 0.5)
    T = return_period(fast.p0, cfg)
    e = sample_ensemble(fast, 10**5, seed=5)
    h = ensemble_histogram(e, T, 50, cfg)
    i, j = np.unravel_index(np.argmax(h.values), h.values.shape)
    xs, ys = h.centers()
    assert math.hypot(xs[i] - fast.x0[0], ys[j] - fast.x0[1]) < 0.5


def test_histogram_empty_raises(cfg, slow_params):
    e = sample_ensemble(slow_params, 1, seed=1)
    e.x = e.x[:0]
    e.p = e.p[:0]
    with pytest.raises(DomainError):
        ensemble_histogram(e, 0.0, 10, cfg)
