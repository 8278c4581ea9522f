"""Registry of bundled examples: metric fields, piecewise surfaces and curves.

Every builder is deterministic in its parameters.  ``example_to_text`` and
``example_from_text`` give a text form that rebuilds the same object.
"""

import io
import json
import math
from dataclasses import dataclass

import numpy as np

from . import surface as surf
from .cantor import cantor_curve
from .fields import piecewise_constant
from .geometry import Box, Chart, GeometryError, MetricField, NullSegment, Regularity
from .transport import CurveSpec, Segment


def _unit_chart(name, lo=(-1.0, -1.0), hi=(1.0, 1.0)):
    return Chart(name, Box(tuple(lo), tuple(hi)))


def degenerate_metric():
    """diag(1, x^2): defined everywhere, degenerate on the line x = 0."""

    def func(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = x[..., 0] ** 2
        return out

    return MetricField(_unit_chart("degenerate"), func, Regularity.SMOOTH, name="degenerate")


def step_level(x):
    """Index k with |x| in (2^-(k+1), 2^-k); -1 for x = 0."""
    a = np.abs(np.asarray(x, float))
    with np.errstate(divide="ignore"):
        k = np.floor(-np.log2(np.where(a > 0, a, 1.0)))
    # exact powers of two sit on a breakpoint; floor(-log2) puts them in the level below
    return np.where(a > 0, k, -1).astype(int)


def oscillating_metric(levels=40):
    """Step metric: 1 on levels k even, 2 on levels k odd; identity on x = 0."""

    def func(x):
        x = np.asarray(x, float)
        k = step_level(x[..., 0])
        c = np.where((k >= 0) & (k % 2 == 1), 2.0, 1.0)
        return c[..., None, None] * np.eye(2)

    null = tuple(
        NullSegment((s * 2.0**-k, -1.0), (s * 2.0**-k, 1.0)) for k in range(1, levels) for s in (1.0, -1.0)
    )
    return MetricField(_unit_chart("oscillating"), func, Regularity.LPLOC, math.inf, null, "oscillating")


def conformal_metric():
    """|x|^(-1/2)-type blow-up at the origin: (x^2+y^2)^(-1/2) I, identity at 0."""

    def func(x):
        x = np.asarray(x, float)
        r = np.linalg.norm(x, axis=-1)
        c = np.where(r > 0, 1.0 / np.where(r > 0, np.sqrt(r), 1.0), 1.0)
        return c[..., None, None] * np.eye(2)

    # in L^p_loc for p < 2; p = 1.5 is recorded as a representative exponent
    return MetricField(_unit_chart("conformal"), func, Regularity.LPLOC, 1.5, (), "conformal")


def dihedral_metric(half_width=3.0):
    """Two half-planes: identity for y < 0, diag(1, 2) for y > 0."""
    w = float(half_width)
    chart = _unit_chart("dihedral", (-w, -w), (w, w))
    lower = [(-w, -w), (w, -w), (w, 0.0), (-w, 0.0)]
    upper = [(-w, 0.0), (w, 0.0), (w, w), (-w, w)]
    return piecewise_constant(chart, [(lower, np.eye(2)), (upper, np.diag([1.0, 2.0]))], name="dihedral")


def sphere_patch_metric(theta=(0.6, 2.5), phi=(-1.0, 1.0)):
    """Round unit sphere in (theta, phi): diag(1, sin^2 theta)."""

    def func(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = np.sin(x[..., 0]) ** 2
        return out

    return MetricField(
        Chart("sphere_patch", Box((theta[0], phi[0]), (theta[1], phi[1]))), func, Regularity.SMOOTH, name="sphere_patch"
    )


def hyperbolic_metric(lo=(-1.0, -1.0), hi=(1.0, 1.0)):
    """diag(1, e^{2x}), Gaussian curvature -1."""

    def func(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = np.exp(2 * x[..., 0])
        return out

    return MetricField(Chart("hyperbolic", Box(tuple(lo), tuple(hi))), func, Regularity.SMOOTH, name="hyperbolic")


def stereographic_metric(half_width=3.0):
    """Unit sphere in stereographic coordinates: 4/(1+|u|^2)^2 I."""

    def func(x):
        x = np.asarray(x, float)
        c = 4.0 / (1.0 + np.sum(x * x, -1)) ** 2
        return c[..., None, None] * np.eye(2)

    w = float(half_width)
    return MetricField(_unit_chart("stereographic", (-w, -w), (w, w)), func, Regularity.SMOOTH, name="stereographic")


def kink_metric():
    """Continuous, non-smooth test metric diag(1 + |x|, 1 + |y|/2)."""

    def func(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 + np.abs(x[..., 0])
        out[..., 1, 1] = 1.0 + 0.5 * np.abs(x[..., 1])
        return out

    return MetricField(_unit_chart("kink", (-2.0, -2.0), (2.0, 2.0)), func, Regularity.C0, name="kink")


def latitude_curve(theta=math.pi / 3):
    """Closed latitude circle in the (theta, phi) chart, phi from 0 to 2 pi."""
    return CurveSpec((Segment("line", ((theta, 0.0), (theta, 2 * math.pi)), 0.0, 1.0),))


def dihedral_crossing(x0=0.0, direction=(0.3, 0.8), half_length=0.5):
    """Straight chart segment crossing the dihedral edge y = 0 at (x0, 0)."""
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    a = np.array([x0, 0.0]) - half_length * d
    b = np.array([x0, 0.0]) + half_length * d
    return CurveSpec((Segment("line", (tuple(a), tuple(b)), 0.0, 1.0),), transversal=(0.5,))


@dataclass(frozen=True)
class ExampleEntry:
    kind: str  # "metric", "surface", "curve", "cantor"
    builder: object
    doc: str


REGISTRY = {
    "cube": ExampleEntry("surface", surf.build_cube, "surface of [0, side]^3; params: side"),
    "tetrahedron": ExampleEntry("surface", surf.build_tetrahedron, "regular tetrahedron"),
    "octant_sphere": ExampleEntry("surface", surf.build_octant_sphere, "round sphere as 8 gnomonic triangles; params: radius"),
    "capped_cylinder": ExampleEntry(
        "surface", surf.build_capped_cylinder, "cylinder with flat caps; params: radius, height, n_around"
    ),
    "disk_annulus": ExampleEntry("surface", surf.build_disk_annulus, "flat disk glued to a flat annulus; params: r_inner, r_outer"),
    "planar_fan": ExampleEntry("surface", surf.build_planar_fan, "flat triangles around one vertex; params: n, radius"),
    "degenerate": ExampleEntry("metric", degenerate_metric, "diag(1, x^2) on (-1,1)^2"),
    "oscillating": ExampleEntry("metric", oscillating_metric, "step metric 1/2 on dyadic bands of |x|; params: levels"),
    "conformal": ExampleEntry("metric", conformal_metric, "(x^2+y^2)^(-1/2) I on (-1,1)^2"),
    "dihedral": ExampleEntry("metric", dihedral_metric, "identity below y = 0, diag(1,2) above; params: half_width"),
    "sphere_patch": ExampleEntry("metric", sphere_patch_metric, "diag(1, sin^2 theta); params: theta, phi ranges"),
    "hyperbolic": ExampleEntry("metric", hyperbolic_metric, "diag(1, e^{2x}); params: lo, hi"),
    "stereographic": ExampleEntry("metric", stereographic_metric, "unit sphere, stereographic chart; params: half_width"),
    "kink": ExampleEntry("metric", kink_metric, "continuous metric diag(1+|x|, 1+|y|/2)"),
    "latitude": ExampleEntry("curve", latitude_curve, "latitude circle in (theta, phi); params: theta"),
    "dihedral_crossing": ExampleEntry("curve", dihedral_crossing, "segment crossing the dihedral edge; params: x0, direction"),
    "cantor_curve": ExampleEntry("cantor", cantor_curve, "Cantor curve; params: N"),
}


def build_example(name, params=None):
    if name not in REGISTRY:
        raise GeometryError(f"unknown example {name!r}; registered: {', '.join(sorted(REGISTRY))}")
    params = dict(params or {})
    obj = REGISTRY[name].builder(**params)
    if name == "dihedral":
        from .fields import tangential_mismatch

        if tangential_mismatch(obj) > 1e-12:
            raise GeometryError("dihedral pieces do not glue")
    return obj


def example_to_text(name, params=None):
    """Text form of an example: the object's own format plus how to rebuild it."""
    params = dict(params or {})
    obj = build_example(name, params)
    entry = REGISTRY[name]
    doc = {"example": name, "params": params, "kind": entry.kind}
    if entry.kind == "surface":
        doc["surface"] = obj.to_dict()
    elif entry.kind == "metric":
        doc["chart"] = obj.chart.to_dict()
        doc["regularity"] = obj.regularity.value
    elif entry.kind == "curve":
        buf = io.StringIO()
        obj.to_csv(buf)
        doc["curve_csv"] = buf.getvalue()
    elif entry.kind == "cantor":
        doc["closure_gap"] = obj.closure_gap()
    return json.dumps(doc, indent=1, sort_keys=True)


def example_from_text(text):
    doc = json.loads(text)
    entry = REGISTRY.get(doc.get("example"))
    if entry is None:
        raise GeometryError(f"unknown example in file: {doc.get('example')!r}")
    if entry.kind == "surface":
        return surf.PiecewiseSurface.from_dict(doc["surface"])
    if entry.kind == "curve":
        return CurveSpec.from_csv(io.StringIO(doc["curve_csv"]))
    return build_example(doc["example"], doc["params"])
