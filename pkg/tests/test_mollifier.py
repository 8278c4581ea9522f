import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from geomolt.backgrounds import EuclideanBackground, SphereBackground
from geomolt.examples import (
    degenerate_metric,
    dihedral_metric,
    kink_metric,
    oscillating_metric,
    sphere_patch_metric,
)
from geomolt.geometry import Box, Chart, GeometryError, MetricField, Regularity, build_covering, constant_field
from geomolt.mollifier import (
    MollifierKernel,
    convergence_report,
    kernel_derivative_eval,
    kernel_eval,
    smooth_wrt_P,
    smooth_wrt_background,
)
from geomolt.quadrature import polar_composite

SQ = Box((-1.0, -1.0), (1.0, 1.0))


def _radial_integral(power):
    """Integral over [0,1] of exp(1/(r^2-1)) r^power, computed independently."""
    return quad(lambda r: math.exp(1.0 / (r * r - 1.0)), 0, 1, weight="alg", wvar=(power, 0), epsabs=1e-15)[0]


# -- kernel ------------------------------------------------------------------------


def test_kernel_vanishes_on_support_boundary():
    x = np.array([0.1, 0.2])
    for eps in (0.2, 0.1, 0.05):
        y = x + eps * np.array([0.6, 0.8])
        assert kernel_eval(x, y, eps) == 0.0
        assert kernel_eval(x, x + 1.5 * eps * np.array([1.0, 0.0]), eps) == 0.0


def test_kernel_rejects_nonpositive_eps():
    with pytest.raises(GeometryError):
        kernel_eval(np.zeros(2), np.zeros(2), 0.0)
    with pytest.raises(GeometryError):
        kernel_eval(np.zeros(2), np.zeros(2), -0.1)


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
def test_kernel_normalization_65_squared(eps):
    x = np.array([0.3, -0.4])
    pts, w = polar_composite(x, [0.0, eps], [0.0, 2 * math.pi], 65, 65)
    total = np.sum(w * kernel_eval(x, pts, eps))
    assert abs(total - 1.0) <= 1e-6


def test_kernel_normalization_cartesian_dblquad():
    eps = 0.1
    f = lambda y, x: float(kernel_eval(np.zeros(2), np.array([x, y]), eps))
    val = dblquad(f, -eps, eps, lambda x: -math.sqrt(max(eps * eps - x * x, 0)), lambda x: math.sqrt(max(eps * eps - x * x, 0)), epsabs=1e-10)[0]
    assert abs(val - 1.0) <= 1e-6


def test_kernel_peak_scale_invariant_and_bounded():
    x = np.array([0.0, 0.0])
    peaks = [float(kernel_eval(x, x, e)) * e**2 for e in (0.2, 0.1, 0.05)]
    assert max(peaks) - min(peaks) <= 1e-6 * max(peaks)
    # peak of the unit-scale kernel: e^{-1} / (2 pi int r e^{1/(r^2-1)} dr)
    assert peaks[0] == pytest.approx(math.exp(-1) / (2 * math.pi * _radial_integral(1)), rel=1e-9)
    bound = peaks[0]
    rng = np.random.default_rng(3)
    for eps in (0.2, 0.1, 0.05):
        y = x + rng.uniform(-eps, eps, size=(1000, 2))
        assert np.all(kernel_eval(x, y, eps) * eps**2 <= bound * (1 + 1e-12))
        assert MollifierKernel(eps).bound == pytest.approx(bound, rel=1e-12)


def test_sphere_kernel_normalized_on_geodesic_ball():
    bg = SphereBackground()
    x = np.array([1.1, 0.3])
    K = MollifierKernel(0.3, background=bg)
    y, dv, _, _ = bg.ball(x[None], 0.3, 65, 128)
    assert abs(np.sum(dv[0] * K(x, y[0])) - 1.0) <= 1e-6
    # zero outside the geodesic ball
    far = np.array([[1.1 + 0.31, 0.3]])
    assert K(x, far)[0] == 0.0


# -- kernel derivatives ------------------------------------------------------------


def test_kernel_first_derivative_integrates_to_zero():
    x = np.array([0.2, 0.1])
    eps = 0.1
    pts, w = polar_composite(x, [0.0, eps], [0.0, 2 * math.pi], 65, 65)
    for mi in ((1, 0), (0, 1)):
        assert abs(np.sum(w * kernel_derivative_eval(x, pts, eps, mi))) <= 1e-6


def test_kernel_derivative_matches_finite_difference_and_is_symmetric():
    y = np.array([0.03, -0.02])
    x = np.array([0.0, 0.0])
    eps = 0.1
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (kernel_eval(x + e, y, eps) - kernel_eval(x - e, y, eps)) / (2 * h)
        mi = (1, 0) if k == 0 else (0, 1)
        an = kernel_derivative_eval(x, y, eps, mi)
        assert an == pytest.approx(fd, rel=1e-6)
    d12 = kernel_derivative_eval(x, y, eps, (1, 1))
    e2 = np.array([0.0, h])
    fd12 = (kernel_derivative_eval(x + e2, y, eps, (1, 0)) - kernel_derivative_eval(x - e2, y, eps, (1, 0))) / (2 * h)
    assert d12 == pytest.approx(fd12, rel=1e-5)


def test_kernel_derivative_order_limit():
    with pytest.raises(GeometryError):
        kernel_derivative_eval(np.zeros(2), np.zeros(2), 0.1, (2, 1))
    with pytest.raises(GeometryError):
        kernel_derivative_eval(np.zeros(2), np.zeros(2), 0.1, (1, 0), SphereBackground())


# -- background smoothing ------------------------------------------------------------


def test_constant_field_is_fixed():
    f = constant_field(Chart("c", SQ), np.array([[2.0, 0.3], [0.3, 1.0]]))
    S = smooth_wrt_background(f, Box((-0.5, -0.5), (0.5, 0.5)), 0.2)
    x = np.random.default_rng(0).uniform(-0.5, 0.5, size=(50, 2))
    g, dg, ddg = S.jet(x)
    assert np.max(np.abs(g - f(x))) <= 1e-10
    assert np.max(np.abs(dg)) <= 1e-10
    assert np.max(np.abs(ddg)) <= 1e-8


def test_degenerate_metric_smoothed_entry_at_origin():
    eps = 0.2
    S = smooth_wrt_background(degenerate_metric(), Box((-0.5, -0.5), (0.5, 0.5)), eps)
    g = S(np.array([[0.0, 0.1]]))[0]
    # int eta(0, y) y_1^2 dy = eps^2 * (pi int r^3 e^{..}) / (2 pi int r e^{..})
    expected = eps**2 * 0.5 * _radial_integral(3) / _radial_integral(1)
    assert g[1, 1] > 0
    assert g[1, 1] == pytest.approx(expected, rel=1e-8)
    assert g[0, 0] == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("x,level_value,eps", [((0.75, 0.1), 1.0, 0.1), ((0.375, -0.2), 2.0, 0.05), ((-0.7, 0.0), 1.0, 0.15)])
def test_oscillating_plateau_is_exact(x, level_value, eps):
    S = smooth_wrt_background(oscillating_metric(), Box((-0.8, -0.5), (0.8, 0.5)), eps)
    g = S(np.array([x]))[0]
    assert np.max(np.abs(g - level_value * np.eye(2))) <= 1e-12


def test_background_eps_too_large_rejected():
    with pytest.raises(GeometryError, match="dist"):
        smooth_wrt_background(kink_metric(), Box((-1.9, -1.0), (1.0, 1.0)), 0.2)


def test_sphere_metric_smoothed_on_sphere_background_is_itself():
    T = sphere_patch_metric()
    S = smooth_wrt_background(T, Box((1.0, -0.5), (2.0, 0.5)), 0.2, SphereBackground())
    x = np.array([[1.2, 0.0], [1.7, 0.3]])
    assert np.max(np.abs(S(x) - T(x))) <= 1e-10


# -- exact polygon path against generic quadrature ----------------------------------


def test_polygon_path_agrees_with_generic_quadrature():
    exact = dihedral_metric()
    generic = MetricField(exact.chart, exact.func, Regularity.LPLOC, math.inf, exact.undefined, "generic")
    region = Box((-1.0, -1.0), (1.0, 1.0))
    Se = smooth_wrt_background(exact, region, 0.2)
    Sg = smooth_wrt_background(generic, region, 0.2, radial=200, angular=256)
    x = np.array([[0.1, 0.05], [0.3, -0.12], [-0.4, 0.19], [0.0, 0.5]])
    # the generic rule sees a jump inside the ball, so it only converges like 1/n
    assert np.max(np.abs(Se(x) - Sg(x))) <= 1e-3
    assert np.max(np.abs(Se(x)[-1] - np.diag([1.0, 2.0]))) <= 1e-13


# -- covering smoothing ----------------------------------------------------------------


def test_covering_constant_field_is_fixed():
    f = constant_field(Chart("c", SQ), np.diag([3.0, 0.5]))
    P = build_covering(Box((-0.5, -0.5), (0.5, 0.5)), 0.4, 0.1, skew=0.2, margin=0.2)
    S = smooth_wrt_P(f, P, 0.1)
    x = np.random.default_rng(4).uniform(-0.5, 0.5, size=(100, 2))
    assert np.max(np.abs(S(x) - f(x))) <= 1e-10


def test_single_chart_covering_equals_background_smoothing():
    T = kink_metric()
    dom = Box((-0.5, -0.5), (0.5, 0.5))
    P = build_covering(dom, 2.0, 0.1, margin=0.3)
    assert len(P.charts) == 1
    S1 = smooth_wrt_P(T, P, 0.2)
    S2 = smooth_wrt_background(T, Box((-0.6, -0.6), (0.6, 0.6)), 0.2)
    x = np.random.default_rng(5).uniform(-0.5, 0.5, size=(40, 2))
    assert np.max(np.abs(S1(x) - S2(x))) <= 1e-12
    for a, b in zip(S1.jet(x)[1:], S2.jet(x)[1:]):
        assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(b)))


def test_covering_preconditions():
    T = kink_metric()
    P = build_covering(Box((-0.5, -0.5), (0.5, 0.5)), 0.5, 0.1, margin=0.2)
    with pytest.raises(GeometryError):
        smooth_wrt_P(T, P, 0.25)  # above the margin
    big = build_covering(Box((-0.5, -0.5), (0.5, 0.5)), 0.5, 0.1, margin=2.0)
    with pytest.raises(GeometryError):
        smooth_wrt_P(T, big, 1.0)
    wide = build_covering(Box((-1.9, -1.9), (1.9, 1.9)), 0.5, 0.1, margin=0.5)
    with pytest.raises(GeometryError, match="leaves"):
        smooth_wrt_P(T, wide, 0.3)


def test_sphere_patch_c0_error_halves():
    T = sphere_patch_metric()
    P = build_covering(Box((0.9, -0.6), (2.2, 0.6)), 0.5, 0.1, margin=0.25)
    region = Box((1.0, -0.5), (2.1, 0.5))
    errs = []
    for eps in (0.1, 0.05):
        S = smooth_wrt_P(T, P, eps)
        from geomolt.geometry import c0_norm

        errs.append(c0_norm(lambda x, S=S: S(x) - T(x), region))
    ratio = errs[0] / errs[1]
    assert 1.5 <= ratio <= 3.0, f"ratio {ratio}"


def test_covering_derivatives_match_finite_differences():
    T = dihedral_metric()
    P = build_covering(Box((-1.0, -1.0), (1.0, 1.0)), 0.5, 0.1, skew=0.2, margin=0.2)
    S = smooth_wrt_P(T, P, 0.1)
    x = np.array([[0.13, 0.02], [-0.31, -0.04], [0.4, 0.07]])
    g, dg, ddg = S.jet(x)
    h = 1e-4
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (S(x + e) - S(x - e)) / (2 * h)
        assert np.max(np.abs(fd - dg[..., k])) <= 1e-5 * max(1.0, np.max(np.abs(dg)))
        fd2 = (S.derivative(x + e) - S.derivative(x - e)) / (2 * h)
        assert np.max(np.abs(fd2 - ddg[..., k, :])) <= 1e-5 * max(1.0, np.max(np.abs(ddg)))
    assert np.max(np.abs(ddg[..., 0, 1] - ddg[..., 1, 0])) <= 1e-10


# -- properties ---------------------------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6), st.sampled_from([0.2, 0.1, 0.05]))
def test_positivity_preserved(x, y, eps):
    P = build_covering(Box((-0.7, -0.7), (0.7, 0.7)), 0.5, 0.1, skew=0.2, margin=0.25)
    for T in (dihedral_metric(), oscillating_metric()):
        S = smooth_wrt_P(T, P, eps)
        g = S(np.array([[x, y]]))[0]
        assert np.allclose(g, g.T, atol=1e-14)
        assert np.linalg.eigvalsh(g).min() > 0


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(a, b):
    T1, T2 = kink_metric(), degenerate_metric()
    region = Box((-0.5, -0.5), (0.5, 0.5))
    combo = MetricField(Chart("m", SQ), lambda x: a * T1(x) + b * T2(x), Regularity.C0)
    x = np.array([[0.1, 0.2], [-0.3, 0.05]])
    lhs = smooth_wrt_background(combo, region, 0.1)(x)
    rhs = a * smooth_wrt_background(T1, region, 0.1)(x) + b * smooth_wrt_background(T2, region, 0.1)(x)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (1 + abs(a) + abs(b))


# -- convergence reports ------------------------------------------------------------------


def _c0_metric():
    return MetricField(
        Chart("q", SQ),
        lambda x: np.stack(
            [np.stack([1 + x[:, 0] ** 2, 0 * x[:, 0]], -1), np.stack([0 * x[:, 0], 1 + 0 * x[:, 0]], -1)], -2
        ),
        Regularity.C0,
    )


def test_report_strictly_decreasing_for_continuous_metric():
    rep = convergence_report(_c0_metric(), "C0LOC", [0.2, 0.1, 0.05], Box((-0.5, -0.5), (0.5, 0.5)))
    e = rep["errors"]
    assert e[0] > e[1] > e[2] > 0
    assert rep["monotone"]


def test_report_constant_field_all_zero():
    f = constant_field(Chart("c", SQ), np.eye(2))
    rep = convergence_report(f, "LPLOC", [0.2, 0.1], Box((-0.5, -0.5), (0.5, 0.5)), p=2)
    assert max(rep["errors"]) <= 1e-10


def test_report_ae_on_plateau_reaches_zero():
    rep = convergence_report(oscillating_metric(), "AE", [0.09, 0.05, 0.01], Box((0.52, -0.5), (0.8, 0.5)))
    assert rep["errors"][0] > rep["errors"][1] > 0
    assert rep["errors"][-1] <= 1e-12


def test_report_warns_on_regularity_mismatch_and_rejects_empty():
    with pytest.warns(UserWarning):
        convergence_report(oscillating_metric(), "C0LOC", [0.05], Box((0.6, -0.5), (0.9, 0.5)))
    with pytest.raises(GeometryError):
        convergence_report(_c0_metric(), "C0LOC", [], Box((-0.5, -0.5), (0.5, 0.5)))
