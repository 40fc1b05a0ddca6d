import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sqbilliard import DomainError
from sqbilliard.analysis import (
    DensityGrid,
    gaussian_smooth,
    grid_from_field,
    hausdorff_distance,
    l1_distance,
    near_returns,
    resample_polyline,
    speed_per_segment,
    wall_standoff_series,
)
from sqbilliard.classical import classical_density_boxed, orbit_polyline, return_period

positive_grid = arrays(float, (12, 12), elements=st.floats(0.0, 10.0)).filter(lambda v: v.sum() > 1e-3)


def test_constant_field(cfg):
    g = grid_from_field(lambda X, Y: np.full(np.broadcast(X, Y).shape, 1 / cfg.L ** 2), 16, 16, cfg)
    assert np.ptp(g.values) == 0.0
    assert g.mass == pytest.approx(1.0, abs=1e-12)


def test_grid_validation(cfg):
    with pytest.raises(DomainError):
        grid_from_field(lambda X, Y: X * 0 - 1.0, 4, 4, cfg)
    with pytest.raises(DomainError):
        grid_from_field(lambda X, Y: X * 0, 1, 4, cfg)
    with pytest.raises(DomainError):
        DensityGrid(np.array([[1.0, -1.0]]), 10.0)


def test_mass_consistent(cfg):
    v = np.random.default_rng(0).random((20, 30))
    g = DensityGrid(v, cfg.L)
    assert g.mass == pytest.approx(v.sum() * (cfg.L / 20) * (cfg.L / 30), rel=1e-12)


def test_boxed_grid_mass(cfg, slow_params):
    g = grid_from_field(lambda X, Y: classical_density_boxed((X, Y), 0.0, slow_params, cfg), 128, 128, cfg)
    assert 0.999 <= g.mass <= 1.001


def test_midpoint_refinement(cfg, slow_params):
    # centre sampling approximates cell averages to second order
    f = lambda X, Y: classical_density_boxed((X, Y), 0.0, slow_params, cfg)

    def err(n):
        return l1_distance(grid_from_field(f, n, n, cfg), grid_from_field(f, n, n, cfg, oversample=16))

    e1, e2 = err(32), err(64)
    assert 3.0 < e1 / e2 < 5.0


def test_l1_basic(cfg):
    a = DensityGrid(np.array([[1.0, 0.0], [0.0, 0.0]]), cfg.L)
    b = DensityGrid(np.array([[0.0, 0.0], [0.0, 1.0]]), cfg.L)
    assert l1_distance(a, a) == 0.0
    assert l1_distance(a, b) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        l1_distance(a, DensityGrid(np.ones((3, 3)), cfg.L))


@settings(max_examples=40)
@given(positive_grid, positive_grid, positive_grid)
def test_l1_metric(a, b, c):
    A, B, C = (DensityGrid(v, 10.0) for v in (a, b, c))
    ab = l1_distance(A, B)
    assert ab == pytest.approx(l1_distance(B, A), abs=1e-14)
    assert 0.0 <= ab <= 2.0 + 1e-12
    assert ab <= l1_distance(A, C) + l1_distance(C, B) + 1e-12


def test_smooth_identity_and_mass(cfg):
    v = np.random.default_rng(1).random((40, 40))
    g = DensityGrid(v, cfg.L)
    np.testing.assert_array_equal(gaussian_smooth(g, 0.0).values, v)
    for s in (0.1, 0.5, 2.0):
        assert gaussian_smooth(g, s).mass == pytest.approx(g.mass, rel=1e-10)
    with pytest.raises(DomainError):
        gaussian_smooth(g, -1.0)


@settings(max_examples=25)
@given(arrays(float, (16, 10), elements=st.floats(0.0, 5.0)), st.floats(0.0, 3.0))
def test_smooth_commutes_with_reflection(half, sigma):
    v = np.vstack([half, half[::-1]])
    s = gaussian_smooth(DensityGrid(v, 10.0), sigma).values
    np.testing.assert_allclose(s, s[::-1], atol=1e-12)


def test_resample_step():
    p = resample_polyline([[0, 0], [1, 0], [1, 2]], 0.1)
    gaps = np.hypot(*np.diff(p, axis=0).T)
    assert gaps.max() <= 0.1 + 1e-12
    np.testing.assert_allclose(p[-1], [1, 2])
    with pytest.raises(DomainError):
        resample_polyline(np.empty((0, 2)), 0.1)


def test_hausdorff_examples():
    a = [[0.0, 0.0], [5.0, 0.0]]
    assert hausdorff_distance(a, a) == 0.0
    assert hausdorff_distance(a, [[0.0, 0.3], [5.0, 0.3]]) == pytest.approx(0.3, abs=1e-12)
    with pytest.raises(DomainError):
        hausdorff_distance(np.empty((0, 2)), a)


def test_hausdorff_union():
    left, right = [[0.0, 0.0], [1.0, 0.0]], [[2.0, 0.0], [3.0, 0.0]]
    assert hausdorff_distance([left, right], [[0.0, 0.0], [3.0, 0.0]], step=0.01) == pytest.approx(0.5, abs=0.01)


@settings(max_examples=30)
@given(arrays(float, (5, 2), elements=st.floats(0, 10)), arrays(float, (4, 2), elements=st.floats(0, 10)))
def test_hausdorff_symmetric(a, b):
    d = hausdorff_distance(a, b, step=0.05)
    assert d == pytest.approx(hausdorff_distance(b, a, step=0.05), abs=1e-12)
    assert d >= 0.0


def _orbit_samples(cfg, n_periods=3, per=512):
    p = (20.0, 40.0)
    T = return_period(p, cfg)
    t = np.arange(n_periods * per + 1) * (T / per)
    x0 = (3.0, 2.0)
    from sqbilliard.classical import propagate_arrays
    x, _ = propagate_arrays(np.tile(x0, (t.size, 1)), np.tile(p, (t.size, 1)), t[:, None], cfg)
    return t, x, T, x0, p


def test_near_returns_on_orbit(cfg):
    t, x, T, x0, _ = _orbit_samples(cfg)
    r = near_returns((t, x), x0, 0.5, T / 4)
    np.testing.assert_allclose(r, [0.0, T, 2 * T, 3 * T], atol=1e-9 * T)


def test_near_returns_empty_when_radius_small(cfg):
    t, x, T, _, _ = _orbit_samples(cfg)
    assert near_returns((t, x), (9.0, 9.5), 0.01, T / 4) == []
    with pytest.raises(DomainError):
        near_returns((t, x), (1, 1), 0.0)


def test_wall_standoff_orbit_zero(cfg):
    _, _, T, x0, p = _orbit_samples(cfg)
    poly = orbit_polyline(x0, p, 3 * T, cfg)
    # treat polyline vertices as time samples; bounces lie on the walls
    t = np.linspace(0, 3 * T, len(poly))
    series = wall_standoff_series((t, poly), cfg, radius=0.5)
    assert all(d == pytest.approx(0.0, abs=1e-12) for _, d in series)


def test_wall_standoff_stationary(cfg):
    t = np.linspace(0, 1, 50)
    x = np.tile([3.0, 4.0], (50, 1))
    assert wall_standoff_series((t, x), cfg) == [(0, 3.0)]
    with pytest.raises(DomainError):
        wall_standoff_series((t[:2], x[:2]), cfg)


def test_speed_per_segment():
    t = np.linspace(0, 2, 201)
    x = np.column_stack([3 * t, np.zeros_like(t)])
    np.testing.assert_allclose(speed_per_segment((t, x), [0, 1, 2]), [3.0, 3.0])
