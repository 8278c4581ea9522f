"""Piecewise-constant metric fields on polygonal pieces of a 2D chart."""

import math
from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, MetricField, NullSegment, Regularity


def polygon_area(verts):
    v = np.asarray(verts, float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ccw(verts):
    v = np.asarray(verts, float)
    if polygon_area(v) < 0:
        v = v[::-1]
    return v


def points_in_polygon(points, verts):
    """Strict-interior test by crossing number (boundary handled by the caller)."""
    p = np.asarray(points, float)
    v = np.asarray(verts, float)
    x, y = p[:, 0:1], p[:, 1:2]
    x1, y1 = v[:, 0], v[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    cond = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    return (np.sum(cond & (x < xc), axis=1) % 2) == 1


def clip_polygon_to_box(verts, lo, hi):
    """Sutherland-Hodgman clip against an axis-aligned box."""
    poly = [tuple(p) for p in np.asarray(verts, float)]
    for axis in (0, 1):
        for bound, keep_le in ((hi[axis], True), (lo[axis], False)):
            if not poly:
                return np.zeros((0, 2))
            out = []
            for i, cur in enumerate(poly):
                prev = poly[i - 1]
                cin = cur[axis] <= bound if keep_le else cur[axis] >= bound
                pin = prev[axis] <= bound if keep_le else prev[axis] >= bound
                if cin != pin:
                    t = (bound - prev[axis]) / (cur[axis] - prev[axis])
                    out.append(tuple(prev[k] + t * (cur[k] - prev[k]) for k in range(2)))
                if cin:
                    out.append(cur)
            poly = out
    return np.asarray(poly, float).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class PiecewiseConstantField(MetricField):
    """Metric that is constant on each polygon; piece edges form its null set.

    ``pieces`` holds (ccw vertices (k, 2), matrix (2, 2)).  ``default`` is
    used outside every polygon when given.
    """

    pieces: tuple = ()
    default: object = None


def piecewise_constant(chart, pieces, default=None, name="piecewise"):
    if chart.dim != 2:
        raise GeometryError("piecewise-constant fields are two dimensional")
    norm = []
    null = []
    for verts, mat in pieces:
        v = ccw(verts)
        m = np.asarray(mat, float)
        if not np.allclose(m, m.T):
            raise GeometryError("piece matrix must be symmetric")
        if abs(polygon_area(v)) == 0:
            raise GeometryError("degenerate polygon")
        norm.append((v, m))
        for i in range(len(v)):
            null.append(NullSegment(tuple(v[i]), tuple(v[(i + 1) % len(v)])))
    dflt = None if default is None else np.asarray(default, float)

    def func(x):
        out = np.full((len(x), 2, 2), np.nan)
        hit = np.zeros(len(x), bool)
        for v, m in norm:
            inside = points_in_polygon(x, v) & ~hit
            out[inside] = m
            hit |= inside
        if dflt is not None:
            out[~hit] = dflt
        elif not hit.all():
            raise GeometryError(f"point {x[~hit][0]} outside every piece")
        return out

    return PiecewiseConstantField(
        chart,
        func,
        Regularity.LPLOC,
        math.inf,
        tuple(null),
        name,
        tuple(norm),
        dflt,
    )


def tangential_mismatch(field, samples=50):
    """Largest jump of g(t, t) across shared piece edges (0 for nicely glued pieces)."""
    worst = 0.0
    pieces = field.pieces
    for a in range(len(pieces)):
        va, ga = pieces[a]
        for b in range(a + 1, len(pieces)):
            vb, gb = pieces[b]
            for i in range(len(va)):
                p0, p1 = va[i], va[(i + 1) % len(va)]
                t = p1 - p0
                L = np.hypot(*t)
                if L == 0:
                    continue
                t = t / L
                for j in range(len(vb)):
                    q0, q1 = vb[j], vb[(j + 1) % len(vb)]
                    cross0 = t[0] * (q0 - p0)[1] - t[1] * (q0 - p0)[0]
                    cross1 = t[0] * (q1 - p0)[1] - t[1] * (q1 - p0)[0]
                    if abs(cross0) > 1e-12 or abs(cross1) > 1e-12:
                        continue
                    s0, s1 = sorted([(q0 - p0) @ t, (q1 - p0) @ t])
                    if min(s1, L) - max(s0, 0.0) <= 1e-12:
                        continue
                    worst = max(worst, abs(t @ ga @ t - t @ gb @ t))
    return worst
