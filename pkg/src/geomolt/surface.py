"""Piecewise smooth surfaces: vertex, edge and face curvature, Gauss-Bonnet, measures.

A surface is a list of faces.  Each face is a convex chart polygon (listed
counter-clockwise) with a face map into R^2 or R^3; the face metric is the
pullback J^T J.  Edges and vertices are inferred from the corner vertex ids.

Curvature comes in three strata:
  K0(v) = 2 pi - sum of interior angles at a vertex,
  K1(x) = sum over the two adjacent faces of the geodesic curvature of the edge,
  K2(x) = Gaussian curvature of a face metric.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .facemaps import (
    AffineMap,
    AnnulusSectorMap,
    CylinderMap,
    GnomonicMap,
    PolarSectorMap,
    make_face_map,
)
from .fields import polygon_area
from .geometry import GeometryError, fd_jet
from .quadrature import composite_gl, gl_interval, triangle_rule
from .riemann import checked_inverse, christoffel_from_jet, gaussian_curvature

GLUE_TOL = 1e-8
GLUE_SAMPLES = 50
ANGLE_RADII = (1e-2, 5e-3, 2.5e-3)
BOUNDARY_SAMPLES = 720


# ---------------------------------------------------------------------------
# structure


@dataclass(eq=False)
class Face:
    id: str
    corners: np.ndarray
    vertex_ids: tuple
    map: object

    def __post_init__(self):
        self.corners = np.asarray(self.corners, float)
        self.vertex_ids = tuple(self.vertex_ids)
        if len(self.corners) != len(self.vertex_ids) or len(self.corners) < 3:
            raise GeometryError(f"face {self.id}: corners and vertex ids must match (>= 3)")
        if polygon_area(self.corners) <= 0:
            raise GeometryError(f"face {self.id}: chart polygon must be counter-clockwise")

    @property
    def n_sides(self):
        return len(self.corners)

    def side(self, k):
        return self.corners[k], self.corners[(k + 1) % self.n_sides]

    def metric(self, u):
        return self.map.metric(u)

    def embed(self, u):
        return self.map.embed(u)

    def gaussian(self, u):
        u = np.asarray(u, float)
        if self.map.flat:
            return np.zeros(u.shape[:-1])
        return gaussian_curvature(self.map.metric, u)

    def triangles(self):
        c = self.corners
        return np.array([[c[0], c[i], c[i + 1]] for i in range(1, self.n_sides - 1)])


@dataclass(eq=False)
class Edge:
    id: str
    v0: str
    v1: str
    sides: list = field(default_factory=list)  # (face_id, side index, forward)


@dataclass(eq=False)
class Vertex:
    id: str
    position: np.ndarray
    corners: list = field(default_factory=list)  # (face_id, corner index)


class PiecewiseSurface:
    """Validated surface; immutable after construction."""

    def __init__(self, faces, closed=True, name="surface"):
        self.name = name
        self.closed = bool(closed)
        self.faces = {}
        for f in faces:
            if f.id in self.faces:
                raise GeometryError(f"duplicate face id {f.id}")
            self.faces[f.id] = f
        self.vertices = {}
        self.edges = {}
        self._side_edge = {}
        self._assemble()
        self._validate()

    # -- assembly ---------------------------------------------------------

    def _assemble(self):
        by_pair = {}
        for f in self.faces.values():
            pos = f.embed(f.corners)
            for i, vid in enumerate(f.vertex_ids):
                v = self.vertices.get(vid)
                if v is None:
                    v = self.vertices[vid] = Vertex(vid, pos[i])
                elif np.linalg.norm(v.position - pos[i]) > 1e-8:
                    raise GeometryError(f"vertex {vid} embedded inconsistently by face {f.id}")
                v.corners.append((f.id, i))
            for k in range(f.n_sides):
                a, b = f.vertex_ids[k], f.vertex_ids[(k + 1) % f.n_sides]
                if a == b:
                    raise GeometryError(f"face {f.id}: degenerate side {k}")
                key = tuple(sorted((a, b)))
                by_pair.setdefault(key, []).append((f.id, k, a == key[0]))
        for n, (key, sides) in enumerate(sorted(by_pair.items())):
            if len(sides) > 2:
                raise GeometryError(f"edge {key} shared by {len(sides)} faces")
            eid = f"e{n}"
            self.edges[eid] = Edge(eid, key[0], key[1], sides)
            for fid, k, fwd in sides:
                self._side_edge[(fid, k)] = (eid, fwd)

    def _validate(self):
        for e in self.edges.values():
            if self.closed and len(e.sides) != 2:
                raise GeometryError(f"closed surface: edge {e.id} has {len(e.sides)} adjacent faces")
            if len(e.sides) == 2:
                tau = (np.arange(GLUE_SAMPLES) + 0.5) / GLUE_SAMPLES
                ds = [edge_speed(self, e.id, tau, side=j) for j in range(2)]
                rel = np.max(np.abs(ds[0] - ds[1]) / np.maximum(np.abs(ds[0]), 1e-300))
                if rel > GLUE_TOL:
                    raise GeometryError(f"faces do not glue along edge {e.id}: length elements differ by {rel:.3g}")
                xs = [edge_points(self, e.id, tau, side=j) for j in range(2)]
                if np.max(np.abs(xs[0] - xs[1])) > 1e-8:
                    raise GeometryError(f"edge {e.id} embedded inconsistently by its faces")
        self.angles = {}
        for v in self.vertices.values():
            angs = [corner_angle(self.faces[fid], i) for fid, i in v.corners]
            for (fid, _), a in zip(v.corners, angs):
                if not a > 1e-8:
                    raise GeometryError(f"vertex {v.id}: zero interior angle in face {fid}")
            self.angles[v.id] = angs

    # -- queries ----------------------------------------------------------

    @property
    def euler_characteristic(self):
        return len(self.vertices) - len(self.edges) + len(self.faces)

    @property
    def embed_dim(self):
        return len(next(iter(self.vertices.values())).position)

    def side_edge(self, fid, k):
        return self._side_edge[(fid, k)]

    def faces_around(self, vid):
        """(face id, corner index) pairs in counter-clockwise order around a vertex."""
        corners = list(self.vertices[vid].corners)
        lookup = {fid: i for fid, i in corners}
        start = corners[0]
        if not self.closed:
            # start at a face whose incoming side is a boundary edge, if any
            for fid, i in corners:
                f = self.faces[fid]
                eid, _ = self._side_edge[(fid, (i - 1) % f.n_sides)]
                if len(self.edges[eid].sides) == 1:
                    start = (fid, i)
                    break
        order = [start]
        while len(order) < len(corners):
            fid, i = order[-1]
            f = self.faces[fid]
            eid, _ = self._side_edge[(fid, (i - 1) % f.n_sides)]
            nxt = [s for s in self.edges[eid].sides if s[0] != fid]
            if not nxt:
                break
            order.append((nxt[0][0], lookup[nxt[0][0]]))
        return order

    # -- file format --------------------------------------------------------

    def to_dict(self):
        edges = []
        for e in self.edges.values():
            samples = edge_points(self, e.id, np.linspace(0, 1, 5))
            edges.append(
                {
                    "id": e.id,
                    "vertices": [e.v0, e.v1],
                    "faces": [[fid, k, fwd] for fid, k, fwd in e.sides],
                    "arc_samples": samples.tolist(),
                }
            )
        return {
            "name": self.name,
            "closed": self.closed,
            "orientation": "chart polygons counter-clockwise",
            "vertices": [
                {"id": v.id, "position": v.position.tolist(), "faces": [fid for fid, _ in v.corners]}
                for v in self.vertices.values()
            ],
            "edges": edges,
            "faces": [
                {
                    "id": f.id,
                    "corners": f.corners.tolist(),
                    "vertex_ids": list(f.vertex_ids),
                    "map": f.map.name,
                    "params": f.map.params,
                }
                for f in self.faces.values()
            ],
        }

    def to_text(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d):
        faces = [Face(f["id"], f["corners"], f["vertex_ids"], make_face_map(f["map"], f["params"])) for f in d["faces"]]
        return cls(faces, closed=d["closed"], name=d.get("name", "surface"))

    @classmethod
    def from_text(cls, text):
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# edge geometry


def _side_chart_points(surface, fid, k, fwd, tau):
    a, b = surface.faces[fid].side(k)
    t = np.asarray(tau, float) if fwd else 1.0 - np.asarray(tau, float)
    return a + t[..., None] * (b - a)


def edge_points(surface, eid, tau, side=0):
    fid, k, fwd = surface.edges[eid].sides[side]
    return surface.faces[fid].embed(_side_chart_points(surface, fid, k, fwd, tau))


def edge_speed(surface, eid, tau, side=0):
    """ds/dtau of the edge, tau running from v0 to v1, measured in one face."""
    fid, k, fwd = surface.edges[eid].sides[side]
    f = surface.faces[fid]
    a, b = f.side(k)
    u = _side_chart_points(surface, fid, k, fwd, tau)
    g = f.metric(u)
    d = b - a
    return np.sqrt(np.einsum("i,...ij,j->...", d, g, d))


def _side_geodesic_curvature(face, k, u):
    """Geodesic curvature of the straight chart side k at points u, normal into the face."""
    a, b = face.side(k)
    d = b - a
    g, dg, _ = fd_jet(face.metric, u, order=1)
    gam = christoffel_from_jet(g, dg, checked_inverse(g))
    acc = np.einsum("...kij,i,j->...k", gam, d, d)
    n = _left_unit_normal(g, np.broadcast_to(d, u.shape))
    return np.einsum("...i,...ij,...j->...", acc, g, n) / np.einsum("i,...ij,j->...", d, g, d)


def _left_unit_normal(g, d):
    """Unit normal (in g) to d, on the left of d in the chart orientation."""
    rot = np.stack([-d[..., 1], d[..., 0]], -1)
    gd = np.einsum("...ij,...j->...i", g, d)
    dd = np.einsum("...i,...i->...", d, gd)
    n = rot - (np.einsum("...i,...i->...", rot, gd) / dd)[..., None] * d
    return n / np.sqrt(np.einsum("...i,...ij,...j->...", n, g, n))[..., None]


def edge_curvature(surface, eid, tau):
    """K1 at edge parameter(s) tau in (0, 1): summed geodesic curvature from both faces."""
    e = surface.edges[eid]
    tau = np.asarray(tau, float)
    if np.any((tau <= 0) | (tau >= 1)):
        raise GeometryError("edge parameter must be interior to the edge")
    if len(e.sides) == 2:
        ds = [edge_speed(surface, eid, tau, side=j) for j in range(2)]
        if np.max(np.abs(ds[0] - ds[1]) / ds[0]) > GLUE_TOL:
            raise GeometryError(f"edge {eid}: faces do not glue")
    total = np.zeros(tau.shape)
    for fid, k, fwd in e.sides:
        u = _side_chart_points(surface, fid, k, fwd, tau)
        total = total + _side_geodesic_curvature(surface.faces[fid], k, u)
    return total


def _edge_rule(n_panels=4, n=16):
    return composite_gl(np.linspace(0, 1, n_panels + 1), n)


def edge_integral(surface, eid, n_panels=4, n=16):
    """Integral of K1 over the whole edge."""
    t, w = _edge_rule(n_panels, n)
    return float(np.sum(w * edge_curvature(surface, eid, t) * edge_speed(surface, eid, t)))


def edge_length(surface, eid):
    t, w = _edge_rule()
    return float(np.sum(w * edge_speed(surface, eid, t)))


# ---------------------------------------------------------------------------
# vertex angles


def _extrapolate(vals):
    a1 = 2 * vals[1] - vals[0]
    a2 = 2 * vals[2] - vals[1]
    return (4 * a2 - a1) / 3


def corner_angle(face, i):
    """Interior angle of a face at corner i, limit of side-tangent angles."""
    c = face.corners
    p = c[i]
    d_next = c[(i + 1) % face.n_sides] - p
    d_prev = c[(i - 1) % face.n_sides] - p
    vals = []
    for r in ANGLE_RADII:
        ta = face.map.jac(p + r * d_next) @ d_next
        tb = face.map.jac(p + r * d_prev) @ d_prev
        cos = ta @ tb / (np.linalg.norm(ta) * np.linalg.norm(tb))
        vals.append(math.acos(max(-1.0, min(1.0, cos))))
    return float(_extrapolate(vals))


def vertex_defect(surface, vid):
    """K0(v): 2 pi minus the interior angles of the incident faces."""
    if vid not in surface.vertices:
        raise GeometryError(f"unknown vertex {vid}")
    angs = surface.angles[vid]
    if min(angs) <= 1e-8:
        raise GeometryError(f"vertex {vid}: zero interior angle")
    return 2 * math.pi - float(sum(angs))


# ---------------------------------------------------------------------------
# face integrals


def _subdivide(tris):
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
    return np.concatenate(
        [np.stack(t, 1) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
    )


def _tri_nodes(tris, n):
    ref, w = triangle_rule(n)
    a = tris[:, 0]
    e1 = tris[:, 1] - a
    e2 = tris[:, 2] - a
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = a[:, None, :] + ref[None, :, :1] * e1[:, None, :] + ref[None, :, 1:] * e2[:, None, :]
    return pts.reshape(-1, 2), (det[:, None] * w[None, :]).ravel()


def face_rule(face, levels=2, n=10):
    """Chart nodes and chart-area weights covering the face."""
    tris = face.triangles()
    for _ in range(levels):
        tris = _subdivide(tris)
    return _tri_nodes(tris, n)


def _volume_element(face, u):
    return np.sqrt(np.linalg.det(face.metric(u)))


def face_integral(face, levels=2, n=10):
    if face.map.flat:
        return 0.0
    u, w = face_rule(face, levels, n)
    return float(np.sum(w * face.gaussian(u) * _volume_element(face, u)))


def gauss_bonnet_closed(surface):
    """(total curvature, total - 2 pi chi) for a closed surface."""
    if not surface.closed:
        raise GeometryError("surface has boundary; gauss_bonnet_closed needs a closed surface")
    k0 = sum(vertex_defect(surface, v) for v in surface.vertices)
    k1 = sum(edge_integral(surface, e) for e in surface.edges)
    k2 = sum(face_integral(f) for f in surface.faces.values())
    total = k0 + k1 + k2
    return total, total - 2 * math.pi * surface.euler_characteristic


def curvature_parts(surface):
    """Totals per stratum: vertices, edges, faces."""
    return {
        "vertices": sum(vertex_defect(surface, v) for v in surface.vertices),
        "edges": sum(edge_integral(surface, e) for e in surface.edges),
        "faces": sum(face_integral(f) for f in surface.faces.values()),
    }


# ---------------------------------------------------------------------------
# builders


def _key(p):
    return "v(" + ",".join(f"{round(float(x), 9) + 0.0:g}" for x in p) + ")"


def _square_faces(origin, eu, ev, prefix):
    o, eu, ev = np.asarray(origin, float), np.asarray(eu, float), np.asarray(ev, float)
    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    vids = [_key(o + a * eu + b * ev) for a, b in corners]
    return Face(prefix, corners, vids, AffineMap(o, [eu, ev]))


def build_cube(side=1.0):
    """Surface of [0, side]^3 with six flat square faces, charts oriented outward."""
    s = float(side)
    X, Y, Z = np.eye(3) * s
    O = np.zeros(3)
    faces = [
        _square_faces(O + X, Y, Z, "x+"),
        _square_faces(O, Z, Y, "x-"),
        _square_faces(O + Y, Z, X, "y+"),
        _square_faces(O, X, Z, "y-"),
        _square_faces(O + Z, X, Y, "z+"),
        _square_faces(O, Y, X, "z-"),
    ]
    return PiecewiseSurface(faces, closed=True, name="cube")


def build_tetrahedron():
    pts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    faces = []
    for n, skip in enumerate(range(4)):
        idx = [i for i in range(4) if i != skip]
        a, b, c = pts[idx]
        if np.cross(b - a, c - a) @ (a - pts[skip]) < 0:
            b, c = c, b
            idx = [idx[0], idx[2], idx[1]]
        faces.append(Face(f"t{n}", [(0, 0), (1, 0), (0, 1)], [f"p{i}" for i in idx], AffineMap(a, [b - a, c - a])))
    return PiecewiseSurface(faces, closed=True, name="tetrahedron")


def build_octant_sphere(radius=1.0):
    """Round sphere as eight geodesic triangles in gnomonic charts."""
    faces = []
    for sx in (1, -1):
        for sy in (1, -1):
            for sz in (1, -1):
                axes = (0, 1, 2) if sx * sy * sz > 0 else (1, 0, 2)
                m = GnomonicMap((sx, sy, sz), axes, radius)
                corners = [(0, 0), (1, 0), (0, 1)]
                vids = [_key(m.embed(np.array(c, float))) for c in corners]
                faces.append(Face(f"o{'+' if sx > 0 else '-'}{'+' if sy > 0 else '-'}{'+' if sz > 0 else '-'}", corners, vids, m))
    return PiecewiseSurface(faces, closed=True, name="octant_sphere")


def build_capped_cylinder(radius=1.0, height=1.0, n_around=3):
    """Cylinder side in n bands plus two flat caps split into sectors."""
    R, H = float(radius), float(height)
    dphi = 2 * math.pi / n_around
    faces = []
    ex, ey, ez = np.eye(3)
    for j in range(n_around):
        phi0 = j * dphi
        band = CylinderMap(R, phi0, dphi, 0.0, H)
        cs = [(0, 0), (1, 0), (1, 1), (0, 1)]
        faces.append(Face(f"side{j}", cs, [_key(band.embed(np.array(c, float))) for c in cs], band))
        top = PolarSectorMap(H * ez, ex, ey, R, phi0, dphi)
        bot = PolarSectorMap(0 * ez, ex, -ey, R, phi0, dphi)
        tri = [(0, 0), (1, 0), (0, 1)]
        for nm, m in (("top", top), ("bot", bot)):
            faces.append(Face(f"{nm}{j}", tri, [_key(m.embed(np.array(c, float))) for c in tri], m))
    return PiecewiseSurface(faces, closed=True, name="capped_cylinder")


def build_disk_annulus(r_inner=2.0, r_outer=3.0, n_around=3):
    """Flat disk glued to a flat annulus along a circle (open surface in the plane)."""
    dphi = 2 * math.pi / n_around
    e1, e2 = np.eye(2)
    c = np.zeros(2)
    faces = []
    for j in range(n_around):
        phi0 = j * dphi
        d = PolarSectorMap(c, e1, e2, r_inner, phi0, dphi)
        a = AnnulusSectorMap(c, e1, e2, r_inner, r_outer, phi0, dphi)
        tri = [(0, 0), (1, 0), (0, 1)]
        sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
        faces.append(Face(f"disk{j}", tri, [_key(d.embed(np.array(p, float))) for p in tri], d))
        faces.append(Face(f"ann{j}", sq, [_key(a.embed(np.array(p, float))) for p in sq], a))
    return PiecewiseSurface(faces, closed=False, name="disk_annulus")


def build_planar_fan(n=6, radius=1.0):
    """Flat triangles around an interior vertex at the origin of the plane."""
    faces = []
    for j in range(n):
        a = 2 * math.pi * j / n
        b = 2 * math.pi * (j + 1) / n
        p = radius * np.array([math.cos(a), math.sin(a)])
        q = radius * np.array([math.cos(b), math.sin(b)])
        m = AffineMap(np.zeros(2), [p, q])
        faces.append(Face(f"f{j}", [(0, 0), (1, 0), (0, 1)], ["o", f"r{j}", f"r{(j + 1) % n}"], m))
    return PiecewiseSurface(faces, closed=False, name="planar_fan")


# ---------------------------------------------------------------------------
# regions: boolean expressions of primitives in the embedding space


class Region:
    """Open set on the surface given by a boolean expression of primitives.

    Primitives (embedding coordinates): ball(c..., r), box(lo..., hi...),
    half(n..., c) meaning n.x < c, point(p...), edge(id, t0, t1) for an open
    edge arc, all().  Combinators: union(...), inter(...), diff(a, b).
    """

    COMBINATORS = ("union", "inter", "diff")

    def __init__(self, expr):
        self.expr = expr

    # -- construction helpers --------------------------------------------------

    @staticmethod
    def ball(center, radius):
        return Region(("ball", tuple(map(float, center)), float(radius)))

    @staticmethod
    def box(lo, hi):
        return Region(("box", tuple(map(float, lo)), tuple(map(float, hi))))

    @staticmethod
    def half(normal, offset):
        return Region(("half", tuple(map(float, normal)), float(offset)))

    @staticmethod
    def point(p):
        return Region(("point", tuple(map(float, p))))

    @staticmethod
    def edge_arc(eid, t0=0.0, t1=1.0):
        return Region(("edge", str(eid), float(t0), float(t1)))

    @staticmethod
    def everything():
        return Region(("all",))

    def __or__(self, other):
        return Region(("union", self.expr, other.expr))

    def __and__(self, other):
        return Region(("inter", self.expr, other.expr))

    def __sub__(self, other):
        return Region(("diff", self.expr, other.expr))

    # -- text form ---------------------------------------------------------

    def to_text(self):
        return _expr_text(self.expr)

    @classmethod
    def parse(cls, text):
        tokens = _tokenize(text)
        expr, pos = _parse_expr(tokens, 0)
        if pos != len(tokens):
            raise GeometryError(f"trailing input in region expression: {' '.join(tokens[pos:])}")
        return cls(expr)

    def __repr__(self):
        return f"Region({self.to_text()})"

    # -- evaluation --------------------------------------------------------

    def primitives(self):
        out = []
        _collect(self.expr, out)
        return out

    def contains(self, X, kind="face", edge_id=None, tau=None):
        X = np.asarray(X, float)
        return _contains(self.expr, X, kind, edge_id, tau)


def _expr_text(e):
    head = e[0]
    if head in Region.COMBINATORS:
        return f"{head}(" + ",".join(_expr_text(a) for a in e[1:]) + ")"
    if head == "all":
        return "all()"
    if head == "edge":
        return f"edge({e[1]},{e[2]!r},{e[3]!r})"
    nums = []
    for a in e[1:]:
        nums.extend(a if isinstance(a, tuple) else (a,))
    return f"{head}(" + ",".join(repr(float(x)) for x in nums) + ")"


def _tokenize(text):
    out, cur = [], ""
    for ch in text:
        if ch in "(),":
            if cur.strip():
                out.append(cur.strip())
            out.append(ch)
            cur = ""
        elif ch in " \t\n;":
            if cur.strip():
                out.append(cur.strip())
            cur = ""
            if ch == ";":
                out.append(",")
        else:
            cur += ch
    if cur.strip():
        out.append(cur.strip())
    return out


def _parse_expr(tok, pos):
    if pos >= len(tok):
        raise GeometryError("unexpected end of region expression")
    head = tok[pos]
    if pos + 1 >= len(tok) or tok[pos + 1] != "(":
        raise GeometryError(f"expected '(' after {head}")
    pos += 2
    args = []
    while tok[pos] != ")":
        if head in Region.COMBINATORS:
            sub, pos = _parse_expr(tok, pos)
            args.append(sub)
        else:
            args.append(tok[pos])
            pos += 1
        if tok[pos] == ",":
            pos += 1
    pos += 1
    if head in Region.COMBINATORS:
        if len(args) < 2 or (head == "diff" and len(args) != 2):
            raise GeometryError(f"{head} needs {'two' if head == 'diff' else 'at least two'} operands")
        return (head, *args), pos
    try:
        if head == "all":
            return ("all",), pos
        if head == "edge":
            return ("edge", args[0], float(args[1]), float(args[2])), pos
        nums = [float(a) for a in args]
    except (ValueError, IndexError) as exc:
        raise GeometryError(f"bad arguments for {head}: {args}") from exc
    if head == "ball":
        return ("ball", tuple(nums[:-1]), nums[-1]), pos
    if head == "box":
        if len(nums) % 2:
            raise GeometryError("box needs lo and hi of equal length")
        h = len(nums) // 2
        return ("box", tuple(nums[:h]), tuple(nums[h:])), pos
    if head == "half":
        return ("half", tuple(nums[:-1]), nums[-1]), pos
    if head == "point":
        return ("point", tuple(nums)), pos
    raise GeometryError(f"unknown region primitive {head}")


def _collect(e, out):
    if e[0] in Region.COMBINATORS:
        for a in e[1:]:
            _collect(a, out)
    elif e not in out:
        out.append(e)


def sdf(prim, X):
    """Signed distance-like function of a primitive with a boundary (negative inside)."""
    head = prim[0]
    X = np.asarray(X, float)
    if head == "ball":
        return np.linalg.norm(X - np.asarray(prim[1]), axis=-1) - prim[2]
    if head == "box":
        lo, hi = np.asarray(prim[1]), np.asarray(prim[2])
        q = np.maximum(lo - X, X - hi)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        return np.where(np.max(q, -1) > 0, outside, np.max(q, -1))
    if head == "half":
        n = np.asarray(prim[1])
        return (X @ n - prim[2]) / np.linalg.norm(n)
    return None


def _contains(e, X, kind, edge_id, tau):
    head = e[0]
    shape = X.shape[:-1]
    if head == "union":
        out = np.zeros(shape, bool)
        for a in e[1:]:
            out |= _contains(a, X, kind, edge_id, tau)
        return out
    if head == "inter":
        out = np.ones(shape, bool)
        for a in e[1:]:
            out &= _contains(a, X, kind, edge_id, tau)
        return out
    if head == "diff":
        return _contains(e[1], X, kind, edge_id, tau) & ~_contains(e[2], X, kind, edge_id, tau)
    if head == "all":
        return np.ones(shape, bool)
    if head == "point":
        if kind != "vertex":
            return np.zeros(shape, bool)
        return np.linalg.norm(X - np.asarray(e[1]), axis=-1) <= 1e-9
    if head == "edge":
        if kind != "edge" or edge_id != e[1]:
            return np.zeros(shape, bool)
        return (tau > e[2]) & (tau < e[3])
    return sdf(e, X) < 0


# ---------------------------------------------------------------------------
# admissibility


def check_admissible(surface, region, tol=1e-6):
    """Raise GeometryError naming the violated boundary condition, if any."""
    prims = [p for p in region.primitives() if p[0] in ("ball", "box", "half")]
    dim = surface.embed_dim
    for p in prims:
        if p[0] in ("ball", "half") and len(p[1]) != dim or p[0] == "box" and len(p[1]) != dim:
            raise GeometryError(f"primitive {_expr_text(p)} has the wrong dimension for this surface")
    for p in region.primitives():
        if p[0] == "point" and not any(
            np.linalg.norm(v.position - np.asarray(p[1])) <= 1e-9 for v in surface.vertices.values()
        ):
            raise GeometryError(f"singleton {_expr_text(p)} is not a vertex")
        if p[0] == "edge" and (p[1] not in surface.edges or not 0 <= p[2] < p[3] <= 1):
            raise GeometryError(f"bad edge arc {_expr_text(p)}")
    if not prims:
        return
    V = np.array([v.position for v in surface.vertices.values()])
    tau = np.linspace(0.0, 1.0, BOUNDARY_SAMPLES + 1)
    for p in prims:
        d = sdf(p, V)
        if np.any(np.abs(d) < tol):
            raise GeometryError(f"boundary of {_expr_text(p)} passes through a vertex")
        for e in surface.edges.values():
            X = edge_points(surface, e.id, tau)
            s = sdf(p, X)
            dX = np.linalg.norm(np.diff(X, axis=0), axis=-1)
            ds = np.diff(s)
            pos = s > 0
            cross = np.nonzero(pos[:-1] != pos[1:])[0]
            for i in cross:
                if abs(ds[i]) < 1e-3 * dX[i]:
                    raise GeometryError(f"boundary of {_expr_text(p)} meets edge {e.id} tangentially")
                if p[0] == "box":
                    x = X[i] + (X[i + 1] - X[i]) * s[i] / (s[i] - s[i + 1]) if s[i] != s[i + 1] else X[i]
                    q = np.abs(np.maximum(np.asarray(p[1]) - x, x - np.asarray(p[2])))
                    if np.sort(q)[1] < tol:
                        raise GeometryError(f"a corner of {_expr_text(p)} lies on edge {e.id}")
            # close approach without crossing: local minimum of |s| below the sample spacing
            a = np.abs(s)
            mid = np.arange(1, len(s) - 1)
            touch = (
                (a[mid] <= a[mid - 1]) & (a[mid] <= a[mid + 1]) & (pos[mid - 1] == pos[mid + 1])
                & (pos[mid] == pos[mid - 1]) & (a[mid] < 0.5 * dX[mid])
            )
            if np.any(touch):
                raise GeometryError(f"boundary of {_expr_text(p)} touches edge {e.id} without crossing")


# ---------------------------------------------------------------------------
# measures


@dataclass
class MeasureValue:
    plus: float
    minus: float
    parts: dict

    @property
    def total(self):
        return self.plus - self.minus

    def as_tuple(self):
        return self.plus, self.minus, self.total


def _face_nodes(face, prims, depth, n=6):
    tris = face.triangles()
    leaves = []
    bounded = [p for p in prims if p[0] in ("ball", "box", "half")]
    for _ in range(depth):
        if not bounded or not len(tris):
            break
        X = face.embed(tris.reshape(-1, 2)).reshape(len(tris), 3, -1)
        cen = face.embed(tris.mean(1))
        rad = np.max(np.linalg.norm(X - cen[:, None, :], axis=-1), -1)
        cut = np.zeros(len(tris), bool)
        for p in bounded:
            cut |= np.abs(sdf(p, cen)) < 1.5 * rad + 1e-12
        leaves.append(tris[~cut])
        tris = _subdivide(tris[cut])
    leaves.append(tris)
    tris = np.concatenate([t for t in leaves if len(t)]) if any(len(t) for t in leaves) else tris
    return _tri_nodes(tris, n)


def _edge_nodes(surface, eid, prims, depth, n=8):
    cuts = {0.0, 1.0}
    for p in prims:
        if p[0] == "edge" and p[1] == eid:
            cuts.update((p[2], p[3]))
    br = np.array(sorted(cuts))
    iv = np.stack([br[:-1], br[1:]], -1)
    bounded = [p for p in prims if p[0] in ("ball", "box", "half")]
    leaves = []
    for _ in range(depth):
        if not bounded or not len(iv):
            break
        mid = iv.mean(-1)
        Xa, Xb, Xm = (edge_points(surface, eid, t) for t in (iv[:, 0], iv[:, 1], mid))
        rad = np.maximum(np.linalg.norm(Xa - Xm, axis=-1), np.linalg.norm(Xb - Xm, axis=-1))
        cut = np.zeros(len(iv), bool)
        for p in bounded:
            cut |= np.abs(sdf(p, Xm)) < 1.5 * rad + 1e-12
        leaves.append(iv[~cut])
        iv = np.concatenate([np.stack([iv[cut, 0], mid[cut]], -1), np.stack([mid[cut], iv[cut, 1]], -1)])
    leaves.append(iv)
    iv = np.concatenate([t for t in leaves if len(t)])
    x, w = gl_interval(0.0, 1.0, n)
    t = (iv[:, :1] + x[None, :] * (iv[:, 1:] - iv[:, :1])).ravel()
    ww = ((iv[:, 1:] - iv[:, :1]) * w[None, :]).ravel()
    return t, ww


class MeasureEngine:
    """Quadrature nodes shared by every set built from the given primitives.

    Sharing nodes makes the valuation identity hold node by node.
    """

    def __init__(self, surface, prims, face_depth=7, edge_depth=30):
        self.surface = surface
        self.vertices = []
        for v in surface.vertices.values():
            k0 = vertex_defect(surface, v.id)
            self.vertices.append((v.position, k0))
        self.edge_data = []
        for e in surface.edges.values():
            if all(surface.faces[f].map.flat and isinstance(surface.faces[f].map, AffineMap) for f, _, _ in e.sides):
                continue  # straight edge between flat affine faces: K1 = 0
            t, w = _edge_nodes(surface, e.id, prims, edge_depth)
            k1 = edge_curvature(surface, e.id, t)
            ds = edge_speed(surface, e.id, t)
            self.edge_data.append((e.id, t, edge_points(surface, e.id, t), w * ds, k1))
        self.face_data = []
        for f in surface.faces.values():
            if f.map.flat:
                continue
            u, w = _face_nodes(f, prims, face_depth)
            self.face_data.append((f.embed(u), w * _volume_element(f, u), f.gaussian(u)))

    def evaluate(self, region, strata=("vertex", "edge", "face")):
        parts = {}
        if "vertex" in strata:
            p = m = 0.0
            for pos, k0 in self.vertices:
                if region.contains(pos[None], kind="vertex")[0]:
                    p += max(k0, 0.0)
                    m += max(-k0, 0.0)
            parts["vertex"] = (p, m)
        if "edge" in strata:
            p = m = 0.0
            for eid, t, X, w, k1 in self.edge_data:
                inside = region.contains(X, kind="edge", edge_id=eid, tau=t)
                p += float(np.sum(w * np.maximum(k1, 0) * inside))
                m += float(np.sum(w * np.maximum(-k1, 0) * inside))
            parts["edge"] = (p, m)
        if "face" in strata:
            p = m = 0.0
            for X, w, k2 in self.face_data:
                inside = region.contains(X, kind="face")
                p += float(np.sum(w * np.maximum(k2, 0) * inside))
                m += float(np.sum(w * np.maximum(-k2, 0) * inside))
            parts["face"] = (p, m)
        return MeasureValue(sum(v[0] for v in parts.values()), sum(v[1] for v in parts.values()), parts)


def measure_on_open(surface, region, strata=("vertex", "edge", "face"), face_depth=7, check=True):
    """(K+, K-, K) of an admissible set; ``strata`` restricts to O n V, O n E, O n F."""
    if isinstance(region, str):
        region = Region.parse(region)
    if check:
        check_admissible(surface, region)
    eng = MeasureEngine(surface, region.primitives(), face_depth=face_depth)
    return eng.evaluate(region, strata)


def generator_axioms_check(surface, pairs, shrinking=None, face_depth=6, tol=1e-6):
    """Valuation, monotonicity, nonnegativity and vanishing checks on sampled set pairs.

    ``pairs`` is a list of (O1, O2); ``shrinking`` a list of nested sequences of
    sets expected to shrink to the empty set.
    """
    report = {"pairs": len(pairs), "valuation_max": 0.0, "monotone": True, "nonnegative": True, "failures": []}
    for n, (a, b) in enumerate(pairs):
        for r in (a, b):
            check_admissible(surface, r)
        eng = MeasureEngine(surface, a.primitives() + [p for p in b.primitives() if p not in a.primitives()], face_depth)
        va, vb, vu, vi = (eng.evaluate(r) for r in (a, b, a | b, a & b))
        for sign in ("plus", "minus"):
            x = {k: getattr(v, sign) for k, v in zip("abui", (va, vb, vu, vi))}
            res = abs(x["u"] + x["i"] - x["a"] - x["b"])
            report["valuation_max"] = max(report["valuation_max"], res)
            if res > tol:
                report["failures"].append(f"pair {n}: valuation residual {res:.3g} ({sign})")
            if min(x.values()) < 0:
                report["nonnegative"] = False
                report["failures"].append(f"pair {n}: negative {sign} measure")
            # O1 n O2 subset of O1 subset of O1 u O2
            if not (x["i"] <= x["a"] + tol and x["a"] <= x["u"] + tol and x["i"] <= x["b"] + tol and x["b"] <= x["u"] + tol):
                report["monotone"] = False
                report["failures"].append(f"pair {n}: monotonicity violated ({sign})")
    report["shrinking"] = []
    for seq in shrinking or ():
        vals = [measure_on_open(surface, r, face_depth=face_depth) for r in seq]
        tail = [v.plus + v.minus for v in vals]
        report["shrinking"].append(tail)
        if tail[-1] > max(tol, 0.05 * max(tail[0], 1e-300)) and tail[-1] > 1e-3:
            report["failures"].append(f"shrinking sequence does not vanish: {tail}")
    report["ok"] = not report["failures"]
    return report


def sample_ball_pairs(surface, n_pairs, rng, radius=(0.15, 0.7), margin=2e-2):
    """Random admissible ball pairs with centres on the surface."""
    fids = list(surface.faces)
    V = np.array([v.position for v in surface.vertices.values()])

    def one():
        while True:
            f = surface.faces[fids[rng.integers(len(fids))]]
            tri = f.triangles()[rng.integers(len(f.triangles()))]
            a, b = rng.random(2)
            if a + b > 1:
                a, b = 1 - a, 1 - b
            u = tri[0] + a * (tri[1] - tri[0]) + b * (tri[2] - tri[0])
            c = f.embed(u)
            r = rng.uniform(*radius)
            if np.min(np.abs(np.linalg.norm(V - c, axis=-1) - r)) < margin:
                continue
            reg = Region.ball(c, r)
            try:
                check_admissible(surface, reg)
            except GeometryError:
                continue
            return reg

    return [(one(), one()) for _ in range(n_pairs)]


# ---------------------------------------------------------------------------
# Gauss-Bonnet on open sets


@dataclass
class BoundaryPiece:
    """Boundary arc inside one face; ``curve`` maps t in [0, 1] to chart points."""

    face: str
    curve: object

    @classmethod
    def line(cls, face, u0, u1):
        u0, u1 = np.asarray(u0, float), np.asarray(u1, float)
        return cls(face, lambda t: u0 + np.asarray(t, float)[..., None] * (u1 - u0))

    @classmethod
    def embedded(cls, surface, face, X_of_t):
        m = surface.faces[face].map
        return cls(face, lambda t: m.inverse(X_of_t(np.asarray(t, float))))


def _curve_jet(curve, t):
    h1, h2 = 1e-4, 1e-3

    def d1(h):
        return (curve(t + h) - curve(t - h)) / (2 * h)

    def d2(h):
        return (curve(t + h) - 2 * curve(t) + curve(t - h)) / h**2

    return curve(t), (4 * d1(h1 / 2) - d1(h1)) / 3, (4 * d2(h2 / 2) - d2(h2)) / 3


def _signed_angle(g, a, b):
    dot = a @ g @ b
    cross = math.sqrt(np.linalg.det(g)) * (a[0] * b[1] - a[1] * b[0])
    return math.atan2(cross, dot)


def _unsigned_angle(g, a, b):
    return abs(_signed_angle(g, a, b))


def _side_at(face, u, tol=1e-7):
    for k in range(face.n_sides):
        a, b = face.side(k)
        d = b - a
        t = np.clip((u - a) @ d / (d @ d), 0, 1)
        if np.linalg.norm(a + t * d - u) < tol:
            return k
    return None


def boundary_turning(surface, pieces, n_panels=8, n=16):
    """(sum of external angles, integral of geodesic curvature) along a closed loop."""
    t, w = composite_gl(np.linspace(0, 1, n_panels + 1), n)
    V = np.array([v.position for v in surface.vertices.values()])
    total_k = 0.0
    per = max(1, BOUNDARY_SAMPLES // len(pieces))
    for pc in pieces:
        f = surface.faces[pc.face]
        ts = np.linspace(0, 1, per)
        X = f.embed(pc.curve(ts))
        if np.min(np.linalg.norm(X[:, None, :] - V[None], axis=-1)) < 1e-6:
            raise GeometryError(f"boundary touches a vertex in face {pc.face}")
        c, dc, ddc = _curve_jet(pc.curve, t)
        g, dg, _ = fd_jet(f.metric, c, order=1)
        gam = christoffel_from_jet(g, dg, checked_inverse(g))
        acc = ddc + np.einsum("...kij,...i,...j->...k", gam, dc, dc)
        nrm = _left_unit_normal(g, dc)
        speed2 = np.einsum("...i,...ij,...j->...", dc, g, dc)
        k = np.einsum("...i,...ij,...j->...", acc, g, nrm) / speed2
        total_k += float(np.sum(w * k * np.sqrt(speed2)))
    angles = []
    for i, pc in enumerate(pieces):
        nx = pieces[(i + 1) % len(pieces)]
        fa, fb = surface.faces[pc.face], surface.faces[nx.face]
        _, da, _ = _curve_jet(pc.curve, np.array(1.0))
        ub, db, _ = _curve_jet(nx.curve, np.array(0.0))
        ua = pc.curve(np.array(1.0))
        if pc.face == nx.face:
            if np.linalg.norm(ua - ub) > 1e-7:
                raise GeometryError(f"boundary loop is not continuous in face {pc.face}")
            if _side_at(fa, ua) is not None:
                raise GeometryError(f"boundary corner lies on an edge of face {pc.face}")
            rho = _signed_angle(fa.metric(ua), da, db)
        else:
            ka, kb = _side_at(fa, ua), _side_at(fb, ub)
            if ka is None or kb is None:
                raise GeometryError(f"boundary jumps between faces {pc.face} and {nx.face} off an edge")
            ea, fwd_a = surface.side_edge(fa.id, ka)
            eb, fwd_b = surface.side_edge(fb.id, kb)
            if ea != eb:
                raise GeometryError(f"boundary jumps between faces {pc.face} and {nx.face} across different edges")
            if np.linalg.norm(fa.embed(ua) - fb.embed(ub)) > 1e-7:
                raise GeometryError("boundary loop is not continuous across an edge")
            # edge direction (v0 -> v1) in each chart
            a0, a1 = fa.side(ka)
            b0, b1 = fb.side(kb)
            dir_a = (a1 - a0) if fwd_a else (a0 - a1)
            dir_b = (b1 - b0) if fwd_b else (b0 - b1)
            gb, ga = fb.metric(ub), fa.metric(ua)
            if _signed_angle(gb, db, dir_b) < 0:
                dir_a, dir_b = -dir_a, -dir_b
            vs_b = _unsigned_angle(gb, db, dir_b)
            vs_a = _unsigned_angle(ga, -da, dir_a)
            if min(math.sin(vs_a), math.sin(vs_b)) < 1e-6:
                raise GeometryError(f"boundary crosses edge {ea} tangentially")
            rho = math.pi - vs_a - vs_b
        if abs(abs(rho) - math.pi) < 1e-9:
            raise GeometryError("external angle of +-pi (cusp) is not allowed")
        angles.append(rho)
    return float(sum(angles)), total_k, angles


def _check_loop_matches(surface, region, pieces, offset=1e-4):
    for pc in pieces:
        f = surface.faces[pc.face]
        c, dc, _ = _curve_jet(pc.curve, np.array(0.5))
        n = _left_unit_normal(f.metric(c), dc)
        h = offset / max(1.0, float(np.linalg.norm(n)))
        inside = region.contains(f.embed(c + h * n)[None], kind="face")[0]
        outside = region.contains(f.embed(c - h * n)[None], kind="face")[0]
        if not inside or outside:
            raise GeometryError(f"boundary loop piece in face {pc.face} does not bound the region on its left")


def gauss_bonnet_open(surface, region, pieces, euler=1, face_depth=9):
    """Residual of Gauss-Bonnet for an admissible open set with a positively oriented boundary loop."""
    if isinstance(region, str):
        region = Region.parse(region)
    check_admissible(surface, region)
    _check_loop_matches(surface, region, pieces)
    rho, kint, _ = boundary_turning(surface, pieces)
    meas = measure_on_open(surface, region, face_depth=face_depth, check=False)
    return rho + kint - (2 * math.pi * euler - meas.total)


def vertex_square_loop(surface, vid, a):
    """Boundary of the corner squares of side fraction ``a`` around a vertex."""
    pieces = []
    for fid, i in surface.faces_around(vid):
        f = surface.faces[fid]
        c = f.corners
        p = c[i]
        dn = c[(i + 1) % f.n_sides] - p
        dp = c[(i - 1) % f.n_sides] - p
        pieces.append(BoundaryPiece.line(fid, p + a * dn, p + a * (dn + dp)))
        pieces.append(BoundaryPiece.line(fid, p + a * (dn + dp), p + a * dp))
    return pieces


# ---------------------------------------------------------------------------
# chart neighbourhoods for smoothing studies


@dataclass
class ChartRegion:
    """A region O inside a single planar chart carrying a metric field."""

    field: object
    shape: str  # "disk" or "box"
    center: tuple
    radius: float = 0.0
    lo: tuple = ()
    hi: tuple = ()
    target: float = 0.0
    concentrated: bool = False  # curvature concentrates at the centre / on s = 0


def vertex_region(surface, vid, radius=0.3, chart_radius=None):
    """Ball of chart radius ``radius`` in a vertex chart built from linear sector maps.

    Requires flat affine faces: each sector of angle 2 pi/k maps linearly onto
    the face corner, with unit rays sent to unit-length side directions so
    that the induced edge metric agrees on both sides of every ray.
    """
    from .fields import piecewise_constant
    from .geometry import Box, Chart

    order = surface.faces_around(vid)
    k = len(order)
    if not surface.closed and len(order) != len(surface.vertices[vid].corners):
        raise GeometryError("vertex chart needs a full cycle of faces")
    R = chart_radius or 4.0 * radius
    pieces = []
    for j, (fid, i) in enumerate(order):
        f = surface.faces[fid]
        if not isinstance(f.map, AffineMap):
            raise GeometryError("vertex charts are built for affine faces")
        G = f.map.B.T @ f.map.B
        c = f.corners
        dn = c[(i + 1) % f.n_sides] - c[i]
        dp = c[(i - 1) % f.n_sides] - c[i]
        dn = dn / math.sqrt(dn @ G @ dn)
        dp = dp / math.sqrt(dp @ G @ dp)
        a0, a1 = 2 * math.pi * j / k, 2 * math.pi * (j + 1) / k
        r0 = np.array([math.cos(a0), math.sin(a0)])
        r1 = np.array([math.cos(a1), math.sin(a1)])
        L = np.stack([dn, dp], 1) @ np.linalg.inv(np.stack([r0, r1], 1))
        half = (a1 - a0) / 2
        rm = np.array([math.cos(a0 + half), math.sin(a0 + half)])
        kite = [(0.0, 0.0), tuple(R * r0), tuple(R * rm / math.cos(half)), tuple(R * r1)]
        pieces.append((kite, L.T @ G @ L))
    box = Box((-R / 2, -R / 2), (R / 2, R / 2))
    fld = piecewise_constant(Chart(f"vertex:{vid}", box), pieces, name=f"vertex chart {vid}")
    return ChartRegion(fld, "disk", (0.0, 0.0), radius=radius, target=vertex_defect(surface, vid), concentrated=True)


def edge_region(surface, eid, t0, t1, half_width, chart_half_width=None):
    """Box t in (t0, t1), |s| < half_width in Fermi coordinates along an edge.

    t is arclength along the side of the first face, s > 0 points into the
    first face and s < 0 into the second.
    """
    from .geometry import Box, Chart, MetricField, Regularity

    e = surface.edges[eid]
    if len(e.sides) != 2:
        raise GeometryError("edge chart needs two adjacent faces")
    (fa, ka, fwd_a), (fb, kb, _) = e.sides
    FA, FB = surface.faces[fa], surface.faces[fb]
    if not (FA.map.flat and FB.map.flat):
        raise GeometryError("edge charts are built for intrinsically flat faces")
    L = edge_length(surface, eid)
    W = chart_half_width or 3.0 * half_width

    def func(x):
        x = np.asarray(x, float)
        t, s = x[..., 0], x[..., 1]
        ga = FA.map.fermi_metric(ka, FA.corners, t, np.maximum(s, 0))
        gb = FB.map.fermi_metric(kb, FB.corners, L - t, np.maximum(-s, 0))
        return np.where((s >= 0)[..., None, None], ga, gb)

    # check the Fermi metrics exist and agree tangentially on the edge
    tt = np.linspace(0.1, 0.9, 9) * L
    ga = FA.map.fermi_metric(ka, FA.corners, tt, 0 * tt)
    gb = FB.map.fermi_metric(kb, FB.corners, L - tt, 0 * tt)
    if np.max(np.abs(ga[:, 0, 0] - gb[:, 0, 0])) > GLUE_TOL:
        raise GeometryError(f"edge {eid}: Fermi metrics disagree along the edge")
    lo = (min(t0, 0.0) - W, -W)
    hi = (max(t1, L) + W, W)
    fld = MetricField(Chart(f"edge:{eid}", Box(lo, hi)), func, Regularity.C0, name=f"edge chart {eid}")
    tau0, tau1 = t0 / L, t1 / L
    if not (0.0 <= tau0 < tau1 <= 1.0):
        raise GeometryError("edge arc must lie within the edge")
    target = measure_on_open(surface, Region.edge_arc(eid, tau0, tau1), check=False).total
    return ChartRegion(fld, "box", (0.0, 0.0), lo=(t0, -half_width), hi=(t1, half_width), target=target, concentrated=True)


def face_region(surface, fid, center, radius, n=24):
    """Chart disk inside one face; target is the integral of K2 over it."""
    from .geometry import Box, Chart, MetricField, Regularity
    from .quadrature import polar_composite

    f = surface.faces[fid]
    c = np.asarray(center, float)
    pts, w = polar_composite(c, np.linspace(0, radius, 5), np.linspace(0, 2 * math.pi, 9), n, n)
    target = float(np.sum(w * f.gaussian(pts) * _volume_element(f, pts)))
    pad = 4.0 * radius
    box = Box(tuple(c - pad), tuple(c + pad))
    fld = MetricField(Chart(f"face:{fid}", box), f.map.metric, Regularity.SMOOTH, name=f"face {fid}")
    return ChartRegion(fld, "disk", tuple(c), radius=radius, target=target)


def _smoothed_gaussian_density(S, pts):
    from .riemann import riemann_from_jet

    g, dg, ddg = S.jet(pts, order=2)
    _, R = riemann_from_jet(g, dg, ddg, checked_inverse(g))
    ric = np.einsum("...ibia->...ab", R)
    K = 0.5 * np.einsum("...ab,...ab->...", np.linalg.inv(g), ric)
    return K * np.sqrt(np.linalg.det(g))


def smoothed_integral(S, region, eps, n=12):
    """Integral of K dV of the smoothed metric S over a ChartRegion."""
    from .quadrature import polar_composite, tensor_composite

    if region.shape == "disk":
        R = region.radius
        if region.concentrated:
            br = [0.0] + [x * eps for x in (0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0) if x * eps < R] + [R]
            ang = np.linspace(0, 2 * math.pi, 49)
        else:
            br = np.linspace(0, R, 4)
            ang = np.linspace(0, 2 * math.pi, 9)
        pts, w = polar_composite(np.asarray(region.center), np.asarray(br), ang, n, n)
    else:
        (t0, s0), (t1, s1) = region.lo, region.hi
        sb = sorted({s0, s1, 0.0, *[x * eps for x in (-2, -1.5, -1, -0.5, 0.5, 1, 1.5, 2) if s0 < x * eps < s1]})
        pts, w = tensor_composite([np.linspace(t0, t1, 3), np.asarray(sb)], n)
    out = 0.0
    for i in range(0, len(pts), 4096):
        out += float(np.sum(w[i : i + 4096] * _smoothed_gaussian_density(S, pts[i : i + 4096])))
    return out


def measure_smoothing_convergence(surface, region, epsilon_sequence, covering=None, n=12):
    """Table of the smoothed curvature integral over O against the measure value.

    ``covering`` is a CoveringP on the region's chart or a dict of
    build_covering arguments (cell_size, overlap, skew).
    """
    from .geometry import Box, CoveringP, build_covering
    from .mollifier import smooth_wrt_P

    eps = [float(e) for e in epsilon_sequence]
    if not eps:
        raise GeometryError("empty epsilon sequence")
    dom = region.field.chart.domain
    if not isinstance(covering, CoveringP):
        opts = {"cell_size": 0.5, "overlap": 0.1, "skew": 0.0}
        opts.update(covering or {})
        if region.shape == "disk":
            c = np.asarray(region.center)
            lo, hi = c - region.radius, c + region.radius
        else:
            lo, hi = np.asarray(region.lo), np.asarray(region.hi)
        pad = 0.05 * float(np.max(hi - lo))
        inner = Box(tuple(lo - pad), tuple(hi + pad))
        gap = min(min(inner.lo[i] - dom.lo[i], dom.hi[i] - inner.hi[i]) for i in range(2))
        margin = 0.8 * (gap - opts["overlap"])
        if margin <= max(eps):
            raise GeometryError("region chart too small for the requested epsilon")
        covering = build_covering(inner, opts["cell_size"], opts["overlap"], opts["skew"], margin=margin)
    rows = []
    for e in eps:
        S = smooth_wrt_P(region.field, covering, e)
        val = smoothed_integral(S, region, e, n)
        rows.append({"eps": e, "value": val, "target": region.target, "error": abs(val - region.target)})
    return rows


def face_box_region(surface, fid, lo, hi):
    """Chart box inside a flat face (target 0)."""
    from .geometry import Box, Chart, MetricField, Regularity

    f = surface.faces[fid]
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    pad = 2.0 * float(np.max(hi - lo))
    fld = MetricField(Chart(f"face:{fid}", Box(tuple(lo - pad), tuple(hi + pad))), f.map.metric, Regularity.SMOOTH, name=f"face {fid}")
    target = 0.0 if f.map.flat else face_integral(f)
    return ChartRegion(fld, "box", tuple((lo + hi) / 2), lo=tuple(lo), hi=tuple(hi), target=target)


def smoothed_total_curvature(surface, eps, vertex_radius=0.3, strip=0.15, covering=None):
    """Total smoothed curvature of a surface with flat affine faces, per region chart.

    The surface is split into vertex balls (vertex charts), edge strips away
    from the vertices (edge charts) and the rest of each face (face charts).
    Pieces overlap or leave gaps only where the smoothed metric is flat.
    """
    rows = {"vertices": 0.0, "edges": 0.0, "faces": 0.0}
    for vid in surface.vertices:
        O = vertex_region(surface, vid, vertex_radius)
        rows["vertices"] += measure_smoothing_convergence(surface, O, [eps], covering)[0]["value"]
    for eid in surface.edges:
        L = edge_length(surface, eid)
        O = edge_region(surface, eid, vertex_radius * 0.5, L - vertex_radius * 0.5, strip)
        rows["edges"] += measure_smoothing_convergence(surface, O, [eps], covering)[0]["value"]
    for f in surface.faces.values():
        lo = f.corners.min(0) + strip * 0.5
        hi = f.corners.max(0) - strip * 0.5
        O = face_box_region(surface, f.id, lo, hi)
        rows["faces"] += measure_smoothing_convergence(surface, O, [eps], covering)[0]["value"]
    rows["total"] = rows["vertices"] + rows["edges"] + rows["faces"]
    return rows
