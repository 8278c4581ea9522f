import math

import numpy as np
import pytest

from geomolt.facemaps import AffineMap
from geomolt.geometry import GeometryError
from geomolt.surface import (
    BoundaryPiece,
    Face,
    PiecewiseSurface,
    Region,
    build_capped_cylinder,
    build_cube,
    build_disk_annulus,
    build_octant_sphere,
    build_planar_fan,
    build_tetrahedron,
    check_admissible,
    curvature_parts,
    edge_curvature,
    edge_integral,
    edge_length,
    edge_region,
    face_region,
    gauss_bonnet_closed,
    gauss_bonnet_open,
    generator_axioms_check,
    measure_on_open,
    measure_smoothing_convergence,
    sample_ball_pairs,
    vertex_defect,
    vertex_square_loop,
)
from geomolt.surface import _side_geodesic_curvature


@pytest.fixture(scope="module")
def cube():
    return build_cube()


@pytest.fixture(scope="module")
def cylinder():
    return build_capped_cylinder()


@pytest.fixture(scope="module")
def sphere():
    return build_octant_sphere()


def _crease_edges(cyl):
    return [eid for eid in cyl.edges if abs(edge_integral(cyl, eid)) > 1.0]


# -- construction ------------------------------------------------------------------


def test_cube_combinatorics(cube):
    assert (len(cube.vertices), len(cube.edges), len(cube.faces)) == (8, 12, 6)
    assert cube.euler_characteristic == 2


def test_glue_mismatch_rejected():
    a = Face("a", [(0, 0), (1, 0), (0, 1)], ["p", "q", "r"], AffineMap(np.zeros(2), [(1, 0), (0, 1)]))
    b = Face("b", [(0, 0), (1, 0), (0, 1)], ["q", "p", "s"], AffineMap(np.zeros(2), [(2, 0), (0, 1)]))
    with pytest.raises(GeometryError):
        PiecewiseSurface([a, b], closed=False)


def test_clockwise_face_rejected():
    with pytest.raises(GeometryError, match="counter-clockwise"):
        Face("a", [(0, 0), (0, 1), (1, 0)], ["p", "q", "r"], AffineMap(np.zeros(2), [(1, 0), (0, 1)]))


def test_surface_text_round_trip(cylinder):
    back = PiecewiseSurface.from_text(cylinder.to_text())
    assert back.to_text() == cylinder.to_text()
    assert gauss_bonnet_closed(back)[0] == gauss_bonnet_closed(cylinder)[0]


# -- vertex, edge and face strata --------------------------------------------------


def test_cube_vertex_defect(cube):
    for vid in cube.vertices:
        assert vertex_defect(cube, vid) == pytest.approx(math.pi / 2, abs=1e-12)


def test_flat_interior_vertex_defect():
    assert abs(vertex_defect(build_planar_fan(), "o")) <= 1e-10


def test_tetrahedron_vertex_defect():
    tet = build_tetrahedron()
    for vid in tet.vertices:
        assert vertex_defect(tet, vid) == pytest.approx(math.pi, abs=1e-10)


def test_unknown_vertex_rejected(cube):
    with pytest.raises(GeometryError):
        vertex_defect(cube, "nowhere")


def test_straight_edges_carry_no_curvature(cube):
    for eid in cube.edges:
        assert np.max(np.abs(edge_curvature(cube, eid, np.array([0.25, 0.5, 0.75])))) <= 1e-9


def test_disk_annulus_crease_curvatures_cancel():
    da = build_disk_annulus()
    found = 0
    for eid, e in da.edges.items():
        if len(e.sides) != 2:
            continue
        if abs(np.linalg.norm(da.vertices[e.v0].position) - 2.0) > 1e-9:
            continue
        if abs(np.linalg.norm(da.vertices[e.v1].position) - 2.0) > 1e-9:
            continue
        found += 1
        per_side = []
        for fid, k, _ in e.sides:
            f = da.faces[fid]
            mid = 0.5 * (f.corners[k] + f.corners[(k + 1) % f.n_sides])
            per_side.append(float(_side_geodesic_curvature(f, k, mid[None])[0]))
        assert sorted(per_side) == pytest.approx([-0.5, 0.5], abs=1e-8)
        assert abs(edge_curvature(da, eid, np.array([0.5]))[0]) <= 1e-8
    assert found == 3


def test_cylinder_crease_curvature_one(cylinder):
    creases = _crease_edges(cylinder)
    assert len(creases) == 6
    for eid in creases:
        assert edge_curvature(cylinder, eid, np.array([0.3, 0.6])) == pytest.approx([1.0, 1.0], abs=1e-8)


def test_edge_parameter_must_be_interior(cube):
    with pytest.raises(GeometryError):
        edge_curvature(cube, next(iter(cube.edges)), np.array([0.0]))


# -- Gauss-Bonnet ------------------------------------------------------------------


def test_cube_gauss_bonnet(cube):
    total, residual = gauss_bonnet_closed(cube)
    assert total == pytest.approx(4 * math.pi, abs=1e-8)
    assert abs(residual) <= 1e-8


def test_sphere_gauss_bonnet(sphere):
    total, residual = gauss_bonnet_closed(sphere)
    assert total == pytest.approx(4 * math.pi, abs=1e-3)
    assert curvature_parts(sphere)["vertices"] == pytest.approx(0.0, abs=1e-3)


def test_cylinder_gauss_bonnet_on_creases(cylinder):
    total, residual = gauss_bonnet_closed(cylinder)
    assert total == pytest.approx(4 * math.pi, abs=1e-3)
    parts = curvature_parts(cylinder)
    assert parts["edges"] == pytest.approx(4 * math.pi, abs=1e-3)


def test_open_surface_rejected_by_closed_gauss_bonnet():
    with pytest.raises(GeometryError):
        gauss_bonnet_closed(build_planar_fan())


def test_flat_triangle_angle_sum(cube):
    P = [np.array([0.2, 0.2, 1.0]), np.array([0.8, 0.3, 1.0]), np.array([0.4, 0.7, 1.0])]
    reg = Region.everything()
    for i in range(3):
        d = P[(i + 1) % 3] - P[i]
        n = np.array([d[1], -d[0], 0.0])
        reg = reg & Region.half(n, float(n @ P[i]))
    pieces = [BoundaryPiece.line("z+", P[i][:2], P[(i + 1) % 3][:2]) for i in range(3)]
    assert abs(gauss_bonnet_open(cube, reg, pieces)) <= 1e-6


def test_cube_vertex_neighbourhood_gauss_bonnet(cube):
    reg = Region.box((0.7, 0.7, 0.7), (1.5, 1.5, 1.5))
    assert abs(gauss_bonnet_open(cube, reg, vertex_square_loop(cube, "v(1,1,1)", 0.3))) <= 1e-3


@pytest.mark.slow
def test_spherical_cap_gauss_bonnet(sphere):
    theta = math.pi / 3
    z0, r = math.cos(theta), math.sin(theta)
    pieces = []
    for k, fid in enumerate(["o+++", "o-++", "o--+", "o+-+"]):
        def arc(t, k=k):
            phi = k * math.pi / 2 + np.asarray(t) * math.pi / 2
            return np.stack([r * np.cos(phi), r * np.sin(phi), z0 + 0 * phi], -1)

        pieces.append(BoundaryPiece.embedded(sphere, fid, arc))
    assert abs(gauss_bonnet_open(sphere, Region.half((0, 0, -1), -z0), pieces)) <= 1e-4


def test_boundary_through_vertex_rejected(cube):
    with pytest.raises(GeometryError, match="vertex"):
        check_admissible(cube, Region.ball((1.0, 1.0, 0.5), 0.5))


# -- measures ----------------------------------------------------------------------


def test_punctured_cube_measure(cube):
    val = measure_on_open(cube, "diff(all(), point(0,0,0))")
    assert val.total == pytest.approx(7 * math.pi / 2, rel=1e-2)


def test_singleton_vertex_measure(cube):
    assert measure_on_open(cube, "point(1,1,1)").as_tuple() == pytest.approx((math.pi / 2, 0.0, math.pi / 2))


def test_singleton_off_vertex_rejected(cube):
    with pytest.raises(GeometryError, match="not a vertex"):
        measure_on_open(cube, "point(0.5,0.5,1)")


def test_edge_arc_measure(cylinder):
    eid = _crease_edges(cylinder)[0]
    val = measure_on_open(cylinder, Region.edge_arc(eid, 0.2, 0.7)).total
    assert val == pytest.approx(0.5 * edge_integral(cylinder, eid), rel=1e-8)


def test_measure_sign_parts_and_strata(sphere):
    reg = Region.ball((0.0, 0.6, 0.8), 0.5)
    val = measure_on_open(sphere, reg)
    assert val.plus >= 0 and val.minus >= 0
    assert val.total == val.plus - val.minus
    parts = sum(measure_on_open(sphere, reg, strata=(s,)).total for s in ("vertex", "edge", "face"))
    assert abs(parts - val.total) <= 1e-8


def test_disjoint_additivity(cylinder):
    a = Region.ball((1.0, 0.0, 0.0), 0.3)
    b = Region.ball((-0.5, 0.0, 1.0), 0.3)
    va, vb, vu = (measure_on_open(cylinder, r).total for r in (a, b, a | b))
    assert abs(vu - va - vb) <= 1e-8


def test_generator_axioms_on_cylinder(cylinder):
    pairs = sample_ball_pairs(cylinder, 20, np.random.default_rng(3))
    rep = generator_axioms_check(cylinder, pairs)
    assert rep["ok"], rep["failures"]
    assert rep["valuation_max"] <= 1e-6


def test_generator_axioms_on_sphere_with_shrinking(sphere):
    pairs = sample_ball_pairs(sphere, 6, np.random.default_rng(4))
    shrinking = [[Region.ball((0.0, 0.6, 0.8), r) for r in (0.3, 0.1, 0.03, 0.01)]]
    rep = generator_axioms_check(sphere, pairs, shrinking=shrinking, face_depth=4)
    assert rep["ok"], rep["failures"]


def test_region_text_round_trip():
    text = "union(ball(0.0,0.0,1.0,0.5),diff(box(0.0,0.0,0.0,1.0,1.0,1.0),point(1.0,1.0,1.0)))"
    assert Region.parse(text).to_text() == text
    with pytest.raises(GeometryError):
        Region.parse("inter(ball(0,0,0,1))")


# -- smoothing convergence ---------------------------------------------------------


@pytest.mark.slow
def test_smoothed_face_interior_matches(sphere):
    O = face_region(sphere, "o+++", (0.3, 0.3), 0.1)
    rows = measure_smoothing_convergence(sphere, O, [0.05, 0.025])
    assert rows[-1]["error"] <= 1e-3


def test_smoothed_cylinder_crease(cylinder):
    eid = _crease_edges(cylinder)[0]
    L = edge_length(cylinder, eid)
    O = edge_region(cylinder, eid, 0.3 * L, 0.7 * L, 0.15)
    rows = measure_smoothing_convergence(cylinder, O, [0.1, 0.05, 0.025])
    assert rows[-1]["value"] == pytest.approx(O.target, rel=0.02)
