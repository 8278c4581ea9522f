import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geomolt.geometry import (
    Box,
    Chart,
    CoveringP,
    GeometryError,
    MetricField,
    NullPoint,
    NullSegment,
    Regularity,
    UndefinedPointError,
    atlas_from_text,
    atlas_to_text,
    build_covering,
    c0_norm,
    constant_field,
    export_grid_csv,
    fd_jet,
    lp_norm,
    pointwise_opnorm,
)
from geomolt.quadrature import box_grid, composite_gl, polar_composite, triangle_rule

UNIT = Box((0.0, 0.0), (1.0, 1.0))


# -- boxes and charts --------------------------------------------------------


def test_empty_box_rejected():
    with pytest.raises(GeometryError):
        Box((0.0, 0.0), (0.0, 1.0))


def test_atlas_round_trip_and_unique_ids():
    charts = [Chart("a", UNIT), Chart("b", Box((-1.0,), (2.0,)))]
    back = atlas_from_text(atlas_to_text(charts))
    assert back == charts
    with pytest.raises(GeometryError):
        atlas_to_text([Chart("a", UNIT), Chart("a", UNIT)])


def test_chart_dim_mismatch_rejected():
    d = Chart("a", UNIT).to_dict()
    d["dim"] = 3
    with pytest.raises(GeometryError):
        Chart.from_dict(d)


# -- metric fields -------------------------------------------------------------


def _undefined_field():
    chart = Chart("u", Box((-1.0, -1.0), (1.0, 1.0)))
    return MetricField(
        chart,
        lambda x: np.broadcast_to(np.eye(2), (len(x), 2, 2)).copy(),
        Regularity.LPLOC,
        2.0,
        (NullPoint((0.0, 0.0)), NullSegment((0.5, -1.0), (0.5, 1.0))),
        "u",
    )


def test_undefined_points_signal_and_nudge():
    f = _undefined_field()
    with pytest.raises(UndefinedPointError):
        f(np.array([[0.0, 0.0]]))
    with pytest.raises(UndefinedPointError):
        f(np.array([[0.5, 0.3]]))
    assert np.array_equal(f(np.array([[0.0, 0.0]]), nudge=True)[0], np.eye(2))
    assert np.array_equal(f(np.array([[0.2, 0.3]]))[0], np.eye(2))


def test_fd_jet_matches_polynomial_derivatives():
    # g = [[x^2 y, x y^3], [x y^3, 1 + x^3]] with closed-form derivatives
    def g(p):
        x, y = p[:, 0], p[:, 1]
        out = np.empty((len(p), 2, 2))
        out[:, 0, 0] = x * x * y
        out[:, 0, 1] = out[:, 1, 0] = x * y**3
        out[:, 1, 1] = 1 + x**3
        return out

    p = np.array([[0.3, -0.7]])
    _, dg, ddg = fd_jet(g, p)
    x, y = 0.3, -0.7
    assert dg[0, 0, 0, 0] == pytest.approx(2 * x * y, abs=1e-8)
    assert dg[0, 0, 0, 1] == pytest.approx(x * x, abs=1e-8)
    assert dg[0, 0, 1, 1] == pytest.approx(3 * x * y * y, abs=1e-8)
    assert dg[0, 1, 1, 0] == pytest.approx(3 * x * x, abs=1e-8)
    assert ddg[0, 0, 0, 0, 0] == pytest.approx(2 * y, abs=1e-6)
    assert ddg[0, 0, 0, 0, 1] == pytest.approx(2 * x, abs=1e-6)
    assert ddg[0, 0, 1, 1, 1] == pytest.approx(6 * x * y, abs=1e-6)
    assert ddg[0, 1, 1, 0, 0] == pytest.approx(6 * x, abs=1e-6)


# -- coverings -------------------------------------------------------------------


def test_unit_square_covering_partition_of_unity():
    P = build_covering(UNIT, 0.5, 0.1)
    assert len(P.charts) == 4
    x = np.random.default_rng(1).uniform(0, 1, size=(10_000, 2))
    psi = P.psi(x)
    assert np.all(psi >= 0)
    assert np.max(np.abs(psi.sum(axis=1) - 1)) <= 1e-12


@pytest.mark.parametrize("overlap", [0.5, 0.7, 0.0])
def test_overlap_must_be_inside_cell(overlap):
    with pytest.raises(GeometryError):
        build_covering(UNIT, 0.5, overlap)


def test_nonpositive_cell_rejected():
    with pytest.raises(GeometryError):
        build_covering(UNIT, 0.0, 0.1)


def test_at_most_four_supports_on_three_by_three():
    P = build_covering(Box((0.0, 0.0), (3.0, 3.0)), 1.0, 0.1)
    assert len(P.charts) == 9
    # dense grid plus the cell corners, where four supports meet
    g = np.linspace(0, 3, 301)
    x = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    counts = P.active(x).sum(axis=1)
    assert counts.max() == 4
    assert counts.min() >= 1


def test_covering_invariants_and_text_round_trip():
    P = build_covering(Box((-1.0, -1.0), (1.0, 1.0)), 0.5, 0.1, skew=0.2, margin=0.3)
    for c in P.charts:
        assert c.outer.contains_box(c.inner.fatten(P.margin))
        lo = np.asarray(c.center) - c.half_width
        hi = np.asarray(c.center) + c.half_width
        assert np.all(lo > c.inner.lo) and np.all(hi < c.inner.hi)
    Q = CoveringP.from_text(P.to_text())
    x = np.random.default_rng(2).uniform(-1, 1, size=(500, 2))
    assert np.array_equal(P.psi(x), Q.psi(x))
    assert json.loads(Q.to_text()) == json.loads(P.to_text())


def test_skewed_covering_alternates_backgrounds():
    P = build_covering(Box((0.0, 0.0), (1.0, 1.0)), 0.5, 0.1, skew=0.3)
    frames = {c.id: np.asarray(c.frame) for c in P.charts}
    assert frames["c0_0"][0, 1] == 0.3 and frames["c0_1"][1, 0] == 0.3


def test_psi_jet_matches_finite_differences():
    P = build_covering(UNIT, 0.5, 0.1)
    x = np.array([[0.47, 0.52], [0.3, 0.55]])
    psi, dpsi, ddpsi = P.psi_jet(x)
    h = 1e-5
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (P.psi(x + e) - P.psi(x - e)) / (2 * h)
        assert np.max(np.abs(fd - dpsi[..., k])) < 1e-5 * (1 + np.max(np.abs(fd)))
        fd2 = (P.psi_jet(x + e)[1] - P.psi_jet(x - e)[1]) / (2 * h)
        assert np.max(np.abs(fd2 - ddpsi[..., k, :])) < 1e-5 * (1 + np.max(np.abs(fd2)))
    assert np.max(np.abs(dpsi.sum(axis=1))) < 1e-12


def test_point_outside_covering_rejected():
    P = build_covering(UNIT, 0.5, 0.1)
    with pytest.raises(GeometryError):
        P.psi(np.array([[3.0, 3.0]]))


# -- norms -----------------------------------------------------------------------


def test_opnorm_examples():
    x = np.zeros((1, 2))
    assert pointwise_opnorm(np.eye(2), x)[0] == pytest.approx(1.0, abs=1e-15)
    assert pointwise_opnorm(np.diag([4.0, 1.0]), x)[0] == pytest.approx(4.0, abs=1e-14)
    assert pointwise_opnorm(np.diag([4.0, 1.0]), x, np.diag([4.0, 4.0]))[0] == pytest.approx(1.0, abs=1e-14)


def test_opnorm_undefined_point_signals():
    with pytest.raises(UndefinedPointError):
        pointwise_opnorm(_undefined_field(), np.array([[0.0, 0.0]]))


def test_lp_norm_of_constant_identity():
    f = constant_field(Chart("u", UNIT), np.eye(2))
    assert lp_norm(f, UNIT, 2) == pytest.approx(1.0, abs=1e-12)
    assert lp_norm(f, UNIT, 1) == pytest.approx(1.0, abs=1e-12)


def test_c0_norm_of_x_squared():
    chart = Chart("u", UNIT)
    f = MetricField(chart, lambda x: x[:, 0, None, None] ** 2 * np.eye(2))
    n = 33
    # the sup is taken over the Gauss-Legendre grid; its largest node sits just inside x = 1
    top = (0.5 * (np.polynomial.legendre.leggauss(n)[0][-1] + 1)) ** 2
    assert c0_norm(f, UNIT, n=n) == pytest.approx(top, abs=1e-14)
    assert c0_norm(f, UNIT, n=n) == pytest.approx(1.0, abs=3e-3)
    assert c0_norm(f, UNIT, n=201) == pytest.approx(1.0, abs=1e-4)


def test_norm_preconditions():
    f = constant_field(Chart("u", UNIT), np.eye(2))
    with pytest.raises(GeometryError):
        lp_norm(f, UNIT, 0.5)
    with pytest.raises(GeometryError):
        c0_norm(f, Box((0.5, 0.5), (1.5, 1.5)))


sym = arrays(np.float64, (2, 2), elements=st.floats(-5, 5, allow_nan=False))


def _field(m):
    m = 0.5 * (m + m.T)
    return lambda x: np.broadcast_to(m, (len(x), 2, 2))


@settings(max_examples=40, deadline=None)
@given(sym, sym, st.floats(-3, 3, allow_nan=False))
def test_norm_axioms(a, b, lam):
    region = UNIT
    fa, fb = _field(a), _field(b)
    for norm in (lambda f: c0_norm(f, region, n=5), lambda f: lp_norm(f, region, 2, n=5)):
        na, nb = norm(fa), norm(fb)
        nab = norm(lambda x: fa(x) + fb(x))
        assert nab <= na + nb + 1e-10
        assert norm(lambda x: lam * fa(x)) == pytest.approx(abs(lam) * na, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(sym, st.floats(0, 2 * math.pi), st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_opnorm_invariant_under_orthogonal_background_frame(m, theta, s1, s2):
    m = 0.5 * (m + m.T)
    Q = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    B = np.diag([s1, s2])
    x = np.zeros((1, 2))
    base = pointwise_opnorm(m, x, B)[0]
    rot = pointwise_opnorm(Q.T @ m @ Q, x, Q.T @ B @ Q)[0]
    assert rot == pytest.approx(base, rel=1e-10, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(sym, arrays(np.float64, (200, 2), elements=st.floats(-1, 1, allow_nan=False)))
def test_random_unit_probes_never_exceed_eigen_norm(m, raw):
    m = 0.5 * (m + m.T)
    val = pointwise_opnorm(m, np.zeros((1, 2)))[0]
    v = raw[np.linalg.norm(raw, axis=1) > 1e-3]
    v = v / np.linalg.norm(v, axis=1)[:, None]
    w = np.roll(v, 1, axis=0)
    probes = np.abs(np.einsum("pi,ij,pj->p", v, m, w))
    assert np.all(probes <= val + 1e-10)


# -- quadrature and export -------------------------------------------------------


def test_quadrature_rules_integrate_polynomials():
    x, w = composite_gl([0.0, 0.3, 1.0], 5)
    assert np.sum(w * x**7) == pytest.approx(1 / 8, abs=1e-14)
    pts, w = box_grid((0.0, 0.0), (1.0, 2.0), 6)
    assert np.sum(w * pts[:, 0] ** 3 * pts[:, 1] ** 2) == pytest.approx(0.25 * 8 / 3, abs=1e-13)
    pts, w = polar_composite((0.0, 0.0), [0.0, 1.0], [0.0, 2 * math.pi], 8, 16)
    assert np.sum(w) == pytest.approx(math.pi, abs=1e-13)
    pts, w = triangle_rule(6)
    assert np.sum(w) == pytest.approx(0.5, abs=1e-15)
    assert np.sum(w * pts[:, 0] * pts[:, 1]) == pytest.approx(1 / 24, abs=1e-15)


def test_grid_csv_header(tmp_path):
    path = tmp_path / "g.csv"
    export_grid_csv(path, np.array([[0.0, 1.0], [0.5, 0.25]]), np.array([1.0, 2.0]))
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert lines[1] == "0.0,1.0,1.0"
