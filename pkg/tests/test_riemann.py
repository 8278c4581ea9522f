import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geomolt.examples import hyperbolic_metric, sphere_patch_metric
from geomolt.geometry import Box, Chart, GeometryError, MetricField, build_covering, constant_field
from geomolt.mollifier import smooth_wrt_P
from geomolt.riemann import (
    SingularMetricError,
    c2_convergence_check,
    christoffel,
    curvature,
    gaussian_curvature,
    integrate_gaussian,
    lk_density,
    lk_measure,
    orthonormalize,
)
from geomolt.surface import build_cube, vertex_region

SQ = Chart("square", Box((-1.0, -1.0), (1.0, 1.0)))


def _polar_metric():
    def func(x):
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = x[..., 0] ** 2
        return out

    return MetricField(Chart("polar", Box((0.5, -3.0), (4.0, 3.0))), func, name="polar")


def _random_spd_metric(seed):
    """Smooth non-diagonal metric with random trigonometric coefficients."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(-0.3, 0.3, size=(3, 3))

    def func(x):
        s, t = x[..., 0], x[..., 1]
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 2.0 + a[0, 0] * np.sin(s) + a[0, 1] * np.cos(t) + a[0, 2] * s * t
        out[..., 1, 1] = 2.0 + a[1, 0] * np.cos(s + t) + a[1, 1] * t * t + a[1, 2] * np.sin(2 * s)
        out[..., 0, 1] = out[..., 1, 0] = a[2, 0] * np.sin(s - t) + a[2, 1] * s + a[2, 2] * np.cos(t)
        return out

    return MetricField(SQ, func, name=f"random-{seed}")


# -- Christoffel symbols -----------------------------------------------------------


def test_euclidean_christoffel_vanishes():
    c = christoffel(constant_field(SQ, np.eye(2)), np.array([0.2, -0.4]))
    assert np.all(c.gamma == 0.0)


def test_polar_christoffel_closed_form():
    gam = christoffel(_polar_metric(), np.array([2.0, 0.3])).gamma
    expected = np.zeros((2, 2, 2))
    expected[0, 1, 1] = -2.0
    expected[1, 0, 1] = expected[1, 1, 0] = 0.5
    assert np.allclose(gam, expected, atol=1e-7)


def test_sphere_christoffel_at_quarter_pi():
    gam = christoffel(sphere_patch_metric(), np.array([math.pi / 4, 0.0])).gamma
    assert gam[0, 1, 1] == pytest.approx(-0.5, abs=1e-7)
    assert gam[1, 0, 1] == pytest.approx(1.0, abs=1e-7)  # cot(pi/4)


@pytest.mark.parametrize("seed", range(5))
def test_christoffel_symmetric_in_lower_indices(seed):
    x = np.random.default_rng(seed).uniform(-0.8, 0.8, size=(20, 2))
    gam = christoffel(_random_spd_metric(seed), x).gamma
    assert np.max(np.abs(gam - np.swapaxes(gam, -1, -2))) <= 1e-12


def test_singular_metric_rejected_with_condition_number():
    fld = constant_field(SQ, np.diag([1.0, 0.0]))
    with pytest.raises(SingularMetricError) as err:
        christoffel(fld, np.array([0.0, 0.0]))
    assert "condition number" in str(err.value)


# -- curvature ---------------------------------------------------------------------


def test_euclidean_curvature_vanishes():
    c = curvature(constant_field(SQ, np.diag([2.0, 3.0])), np.array([0.1, 0.1]))
    assert np.all(c.R == 0.0)
    assert c.gaussian == 0.0


def test_round_sphere_gaussian_curvature_one():
    theta = np.random.default_rng(1).uniform(0.7, 2.4, 100)
    x = np.stack([theta, np.zeros_like(theta)], 1)
    K = gaussian_curvature(sphere_patch_metric(), x)
    assert np.max(np.abs(K - 1.0)) <= 1e-8


def test_hyperbolic_gaussian_curvature_minus_one():
    x = np.random.default_rng(2).uniform(-0.9, 0.9, size=(50, 2))
    K = gaussian_curvature(hyperbolic_metric(), x)
    assert np.max(np.abs(K + 1.0)) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_curvature_identities_on_random_metrics(seed):
    x = np.random.default_rng(10 + seed).uniform(-0.8, 0.8, size=(10, 2))
    c = curvature(_random_spd_metric(seed), x)
    R = c.R
    assert np.max(np.abs(R + np.swapaxes(R, -1, -2))) <= 1e-8
    # R^l_kij + R^l_ijk + R^l_jki
    bianchi = R + np.einsum("...lijk->...lkij", R) + np.einsum("...ljki->...lkij", R)
    assert np.max(np.abs(bianchi)) <= 1e-8
    assert np.max(np.abs(c.scalar - 2.0 * c.gaussian)) <= 1e-8


def test_sphere_sign_convention_positive():
    c = curvature(sphere_patch_metric(), np.array([1.2, 0.0]))
    assert c.scalar == pytest.approx(2.0, abs=1e-8)


# -- frames ------------------------------------------------------------------------


def test_orthonormalize_identity():
    out = orthonormalize(np.eye(2), np.eye(2), np.zeros(2))
    assert np.allclose(out, np.eye(2))


def test_orthonormalize_scaled_metric():
    out = orthonormalize(np.diag([4.0, 1.0]), np.eye(2), np.zeros(2))
    assert np.allclose(out, [[0.5, 0.0], [0.0, 1.0]], atol=1e-14)


def test_orthonormalize_rejects_degenerate_frame():
    with pytest.raises(GeometryError):
        orthonormalize(np.eye(2), np.array([[1.0, 2.0], [1.0, 2.0]]), np.zeros(2))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 4))
def test_orthonormalize_random_spd(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    g = a @ a.T + 0.5 * np.eye(n)
    f = rng.normal(size=(n, n)) + 2 * np.eye(n)
    w = orthonormalize(g, f, np.zeros(n))
    assert np.max(np.abs(w.T @ g @ w - np.eye(n))) <= 1e-10
    assert np.sign(np.linalg.det(w)) == np.sign(np.linalg.det(f))


# -- Lipschitz-Killing densities ---------------------------------------------------


def test_lk_odd_kappa_identically_zero():
    fld = sphere_patch_metric()
    assert lk_density(fld, 1, np.array([1.0, 0.0])) == 0.0
    assert lk_measure(fld, ((0.8, -0.5), (2.0, 0.5)), 1) == 0.0
    assert lk_measure(hyperbolic_metric(), ((-0.5, -0.5), (0.5, 0.5)), 1) == 0.0


def test_lk_kappa_zero_is_area():
    fld = constant_field(SQ, np.eye(2))
    assert lk_measure(fld, ((0.0, 0.0), (1.0, 1.0)), 0) == pytest.approx(1.0, abs=1e-8)


def test_lk_kappa_out_of_range():
    with pytest.raises(GeometryError):
        lk_density(sphere_patch_metric(), 3, np.array([1.0, 0.0]))
    with pytest.raises(GeometryError):
        lk_measure(sphere_patch_metric(), ((0.8, -0.5), (2.0, 0.5)), -2)


def test_lk_density_frame_independent():
    fld = _random_spd_metric(3)
    rng = np.random.default_rng(4)
    for x in rng.uniform(-0.7, 0.7, size=(5, 2)):
        a = lk_density(fld, 2, x, frame=np.eye(2))
        rot = rng.normal(size=(2, 2)) + 2 * np.eye(2)
        if np.linalg.det(rot) < 0:
            rot[:, 0] *= -1
        b = lk_density(fld, 2, x, frame=rot)
        assert abs(a - b) <= 1e-8


def _cube_vertex_smoothed():
    cube = build_cube()
    O = vertex_region(cube, next(iter(cube.vertices)), 0.3)
    P = build_covering(Box((-0.4, -0.4), (0.4, 0.4)), 0.4, 0.1, 0.2, margin=0.15)
    return smooth_wrt_P(O.field, P, 0.1)


def test_lk_kappa_two_proportional_to_total_curvature():
    cases = [
        (sphere_patch_metric(), ((0.8, -0.5), (2.0, 0.5))),
        (hyperbolic_metric(), ((-0.5, -0.5), (0.5, 0.5))),
        (_cube_vertex_smoothed(), ((-0.15, -0.15), (0.15, 0.15))),
    ]
    ratios = []
    for fld, region in cases:
        total = integrate_gaussian(fld, region)
        assert abs(total) > 1e-3
        ratios.append(lk_measure(fld, region, 2) / total)
    assert max(ratios) - min(ratios) <= 1e-6 * abs(ratios[0])


# -- C2 convergence ----------------------------------------------------------------


def _probe_grid(lo, hi, n=5):
    a = np.linspace(lo[0], hi[0], n)
    b = np.linspace(lo[1], hi[1], n)
    return np.array([(s, t) for s in a for t in b])


def test_c2_check_flat_metric_exact():
    fld = constant_field(SQ, np.array([[2.0, 0.3], [0.3, 1.0]]))
    P = build_covering(Box((-0.5, -0.5), (0.5, 0.5)), 0.5, 0.1, 0.2, margin=0.25)
    rows = c2_convergence_check(fld, P, [0.2, 0.1, 0.05], _probe_grid((-0.4, -0.4), (0.4, 0.4)))
    for r in rows:
        assert r["gamma_err"] <= 1e-8 and r["riemann_err"] <= 1e-8 and r["gaussian_err"] <= 1e-8


def test_c2_check_rejects_empty_sequence():
    P = build_covering(Box((-0.5, -0.5), (0.5, 0.5)), 0.5, 0.1, margin=0.25)
    with pytest.raises(GeometryError):
        c2_convergence_check(constant_field(SQ, np.eye(2)), P, [], np.zeros((1, 2)))


@pytest.mark.slow
def test_c2_check_sphere_patch_gaussian_decreasing():
    P = build_covering(Box((0.9, -0.6), (2.2, 0.6)), 0.5, 0.1, margin=0.25)
    rows = c2_convergence_check(
        sphere_patch_metric(), P, [0.2, 0.1, 0.05], _probe_grid((1.0, -0.5), (2.1, 0.5))
    )
    errs = [r["gaussian_err"] for r in rows]
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] <= 0.05


@pytest.mark.slow
def test_c2_check_hyperbolic_curvature_error_halves():
    P = build_covering(Box((-0.6, -0.6), (0.6, 0.6)), 0.5, 0.1, margin=0.3)
    rows = c2_convergence_check(
        hyperbolic_metric(), P, [0.2, 0.1, 0.05], _probe_grid((-0.5, -0.5), (0.5, 0.5))
    )
    errs = [r["gaussian_err"] for r in rows]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(1.5 <= r <= 3.0 for r in ratios), f"ratios {ratios}"
