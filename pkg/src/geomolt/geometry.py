"""Charts, metric fields, coverings with partitions of unity, and tensor norms."""

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .quadrature import box_grid


class GeometryError(ValueError):
    pass


class UndefinedPointError(GeometryError):
    """Raised when a field is queried on its declared null set."""


# ---------------------------------------------------------------------------
# boxes and charts


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not lo:
            raise GeometryError("box corners must have equal, nonzero length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise GeometryError(f"empty box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return len(self.lo)

    @property
    def widths(self):
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    def contains(self, x, margin=0.0):
        x = np.asarray(x, float)
        lo = np.asarray(self.lo) + margin
        hi = np.asarray(self.hi) - margin
        return np.all((x > lo) & (x < hi), axis=-1)

    def contains_box(self, other, margin=0.0):
        return all(
            a + margin <= c and d <= b - margin
            for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi)
        )

    def fatten(self, r):
        return Box(tuple(a - r for a in self.lo), tuple(b + r for b in self.hi))

    def to_dict(self):
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["lo"]), tuple(d["hi"]))


@dataclass(frozen=True)
class Chart:
    id: str
    domain: Box

    @property
    def dim(self):
        return self.domain.dim

    def to_dict(self):
        return {"id": self.id, "domain": self.domain.to_dict(), "dim": self.dim}

    @classmethod
    def from_dict(cls, d):
        chart = cls(d["id"], Box.from_dict(d["domain"]))
        if "dim" in d and d["dim"] != chart.dim:
            raise GeometryError("chart dim does not match its domain")
        return chart


def atlas_to_text(charts):
    ids = [c.id for c in charts]
    if len(set(ids)) != len(ids):
        raise GeometryError("chart ids must be unique within an atlas")
    return json.dumps({"charts": [c.to_dict() for c in charts]}, indent=2)


def atlas_from_text(text):
    charts = [Chart.from_dict(d) for d in json.loads(text)["charts"]]
    if len({c.id for c in charts}) != len(charts):
        raise GeometryError("chart ids must be unique within an atlas")
    return charts


# ---------------------------------------------------------------------------
# null sets


@dataclass(frozen=True)
class NullPoint:
    point: tuple

    def distance(self, x):
        return np.linalg.norm(np.asarray(x, float) - np.asarray(self.point), axis=-1)


@dataclass(frozen=True)
class NullSegment:
    a: tuple
    b: tuple

    def distance(self, x):
        x = np.asarray(x, float)
        a = np.asarray(self.a, float)
        d = np.asarray(self.b, float) - a
        t = np.clip(((x - a) @ d) / (d @ d), 0.0, 1.0)
        return np.linalg.norm(x - (a + t[..., None] * d), axis=-1)


# fixed, irrational-ish direction used to push quadrature nodes off null sets
_NUDGE = np.array([0.6180339887498949, 0.7861513777574233, 0.1])


class Regularity(str, Enum):
    SMOOTH = "SMOOTH"
    C0 = "C0"
    LPLOC = "LPLOC"
    MEASURABLE = "MEASURABLE"


# ---------------------------------------------------------------------------
# metric fields


@dataclass(frozen=True, eq=False)
class MetricField:
    """A field of symmetric (0,2) tensors on a chart box.

    ``func`` maps points of shape (N, n) to matrices (N, n, n).  Points on a
    declared null set are UNDEFINED; when ``nudge`` is requested they are
    pushed off the set by 1e-12 along a fixed direction instead.
    """

    chart: Chart
    func: Callable
    regularity: Regularity = Regularity.SMOOTH
    p: Optional[float] = None
    undefined: tuple = ()
    name: str = ""

    @property
    def dim(self):
        return self.chart.dim

    def __call__(self, x, nudge=False):
        x = np.asarray(x, float)
        flat = x.reshape(-1, self.dim)
        if self.undefined:
            hit = np.zeros(len(flat), bool)
            for ns in self.undefined:
                hit |= ns.distance(flat) < 1e-13
            if hit.any():
                if not nudge:
                    raise UndefinedPointError(
                        f"{self.name or 'field'} undefined at {flat[hit][0]}"
                    )
                flat = flat.copy()
                flat[hit] += 1e-12 * _NUDGE[: self.dim]
        vals = np.asarray(self.func(flat), float)
        return vals.reshape(x.shape[:-1] + (self.dim, self.dim))

    def jet(self, x, order=2):
        """Value and derivatives by Richardson-extrapolated central differences.

        Returns (g, dg, ddg) with dg[..., i, j, k] = d_k g_ij and
        ddg[..., i, j, k, l] = d_k d_l g_ij (ddg is None for order 1).
        """
        return fd_jet(self, x, order)


def fd_jet(f, x, order=2, h1=1e-5, h2=1e-3):
    x = np.asarray(x, float)
    shape = x.shape[:-1]
    n = x.shape[-1]
    xf = x.reshape(-1, n)
    scale = 1.0 + np.abs(xf)
    g = f(xf)

    def ev(dx):
        return f(xf + dx)

    dg = np.empty(g.shape + (n,))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0

        def d1(h):
            step = (h * scale[:, k])[:, None] * e
            return (ev(step) - ev(-step)) / (2 * h * scale[:, k])[:, None, None]

        dg[..., k] = (4 * d1(h1 / 2) - d1(h1)) / 3
    if order < 2:
        return g.reshape(shape + g.shape[1:]), dg.reshape(shape + dg.shape[1:]), None
    ddg = np.empty(g.shape + (n, n))
    for k in range(n):
        ek = np.zeros(n)
        ek[k] = 1.0
        for l in range(k, n):
            el = np.zeros(n)
            el[l] = 1.0
            if k == l:

                def d2(h):
                    hs = h * scale[:, k]
                    step = hs[:, None] * ek
                    return (ev(step) - 2 * g + ev(-step)) / (hs**2)[:, None, None]

            else:

                def d2(h):
                    hk = h * scale[:, k]
                    hl = h * scale[:, l]
                    sk = hk[:, None] * ek
                    sl = hl[:, None] * el
                    num = ev(sk + sl) - ev(sk - sl) - ev(-sk + sl) + ev(-sk - sl)
                    return num / (4 * hk * hl)[:, None, None]

            val = (4 * d2(h2 / 2) - d2(h2)) / 3
            ddg[..., k, l] = val
            ddg[..., l, k] = val
    return (
        g.reshape(shape + g.shape[1:]),
        dg.reshape(shape + dg.shape[1:]),
        ddg.reshape(shape + ddg.shape[1:]),
    )


def constant_field(chart, matrix, name="constant"):
    m = np.asarray(matrix, float)

    def func(x):
        return np.broadcast_to(m, (len(x),) + m.shape).copy()

    return MetricField(chart, func, Regularity.SMOOTH, name=name)


# ---------------------------------------------------------------------------
# frames


@dataclass(frozen=True, eq=False)
class FrameField:
    """Frame samples: columns of ``frames[i]`` are the frame vectors at ``points[i]``."""

    chart: Chart
    points: np.ndarray
    frames: np.ndarray
    orthonormal_wrt: Optional[MetricField] = None

    def __post_init__(self):
        dets = np.linalg.det(self.frames)
        if np.any(np.abs(dets) < 1e-14):
            raise GeometryError("frame columns are linearly dependent")
        if self.orthonormal_wrt is not None:
            g = self.orthonormal_wrt(self.points)
            gram = np.einsum("...ai,...ab,...bj->...ij", self.frames, g, self.frames)
            if np.max(np.abs(gram - np.eye(self.chart.dim))) > 1e-10:
                raise GeometryError("frame is not orthonormal for the tagged metric")


# ---------------------------------------------------------------------------
# coverings


def _bump_logderivs(s):
    """p', p'' of p(s) = 1/(s^2-1) inside |s|<1, zeros outside."""
    inside = np.abs(s) < 1.0
    q = np.where(inside, s * s - 1.0, -1.0)
    p1 = np.where(inside, -2 * s / q**2, 0.0)
    p2 = np.where(inside, -2 / q**2 + 8 * s * s / q**3, 0.0)
    val = np.where(inside, np.exp(1.0 / q), 0.0)
    return val, p1, p2


@dataclass(frozen=True)
class CoverChart:
    id: str
    inner: Box  # U
    outer: Box  # O
    frame: tuple  # linear map to the chart's own Euclidean coordinates
    center: tuple
    half_width: tuple  # bump support half widths (support inside U)

    @property
    def frame_matrix(self):
        return np.asarray(self.frame, float)

    @property
    def background(self):
        a = self.frame_matrix
        return a.T @ a


@dataclass(frozen=True, eq=False)
class CoveringP:
    """Locally finite box covering with exp-bump partition of unity.

    Each chart carries a Euclidean background given by a linear frame: the
    background metric in base coordinates is ``A.T @ A``.
    """

    domain: Box
    charts: tuple
    margin: float = 1.0

    def __post_init__(self):
        for c in self.charts:
            if not c.outer.contains_box(c.inner.fatten(self.margin), margin=0.0) or not (
                all(o < i for o, i in zip(c.outer.lo, c.inner.lo))
            ):
                raise GeometryError(f"chart {c.id}: inner box not compactly inside outer")
            sup = Box(
                tuple(cc - h for cc, h in zip(c.center, c.half_width)),
                tuple(cc + h for cc, h in zip(c.center, c.half_width)),
            )
            if not all(a < s and t < b for a, b, s, t in zip(c.inner.lo, c.inner.hi, sup.lo, sup.hi)):
                raise GeometryError(f"chart {c.id}: bump support not inside U")

    @property
    def dim(self):
        return self.domain.dim

    def _bumps(self, x):
        x = np.asarray(x, float).reshape(-1, self.dim)
        c = np.array([ch.center for ch in self.charts])
        h = np.array([ch.half_width for ch in self.charts])
        s = (x[:, None, :] - c[None]) / h[None]  # (N, m, n)
        val, p1, p2 = _bump_logderivs(s)
        b = np.prod(val, axis=-1)
        return b, p1 / h[None], p2 / h[None] ** 2

    def psi(self, x):
        b, _, _ = self._bumps(x)
        total = b.sum(axis=1)
        if np.any(total <= 0):
            raise GeometryError("point outside the covering")
        return b / total[:, None]

    def psi_jet(self, x):
        """psi, d psi (N,m,n), dd psi (N,m,n,n)."""
        b, q1, q2 = self._bumps(x)
        n = self.dim
        db = b[..., None] * q1
        ddb = b[..., None, None] * (
            q1[..., :, None] * q1[..., None, :] + np.einsum("...k,kl->...kl", q2, np.eye(n))
        )
        S = b.sum(axis=1)
        if np.any(S <= 0):
            raise GeometryError("point outside the covering")
        dS = db.sum(axis=1)
        ddS = ddb.sum(axis=1)
        Si = 1.0 / S
        psi = b * Si[:, None]
        dpsi = db * Si[:, None, None] - b[..., None] * (dS * Si[:, None] ** 2)[:, None, :]
        outer_b_S = db[..., :, None] * dS[:, None, None, :]
        ddpsi = (
            ddb * Si[:, None, None, None]
            - (outer_b_S + np.swapaxes(outer_b_S, -1, -2)) * (Si**2)[:, None, None, None]
            - b[..., None, None] * (ddS * (Si**2)[:, None, None])[:, None]
            + 2
            * b[..., None, None]
            * ((dS[:, :, None] * dS[:, None, :]) * (Si**3)[:, None, None])[:, None]
        )
        return psi, dpsi, ddpsi

    def active(self, x, tol=0.0):
        b, _, _ = self._bumps(x)
        return b > tol

    def to_dict(self):
        return {
            "domain": self.domain.to_dict(),
            "margin": self.margin,
            "charts": [
                {
                    "id": c.id,
                    "inner": c.inner.to_dict(),
                    "outer": c.outer.to_dict(),
                    "background": [list(r) for r in c.frame],
                    "bump": {"center": list(c.center), "half_width": list(c.half_width)},
                }
                for c in self.charts
            ],
        }

    def to_text(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_text(cls, text):
        d = json.loads(text)
        charts = tuple(
            CoverChart(
                c["id"],
                Box.from_dict(c["inner"]),
                Box.from_dict(c["outer"]),
                tuple(tuple(r) for r in c["background"]),
                tuple(c["bump"]["center"]),
                tuple(c["bump"]["half_width"]),
            )
            for c in d["charts"]
        )
        return cls(Box.from_dict(d["domain"]), charts, d["margin"])


def build_covering(domain_box, cell_size, overlap, skew=0.0, margin=1.0):
    """Tile ``domain_box`` with overlapping cells carrying exp-bump weights.

    Cells have spacing at most ``cell_size``.  U_w is the cell grown by
    ``overlap`` on every side, the bump support is the cell grown by
    ``overlap/2`` and O_w is U_w grown by ``margin`` plus a sliver.  With
    ``skew`` != 0 neighbouring charts get shears along different axes so
    that their Euclidean backgrounds differ.
    """
    if not isinstance(domain_box, Box):
        domain_box = Box(*domain_box)
    if cell_size <= 0:
        raise GeometryError("cell_size must be positive")
    if not (0 < overlap < cell_size):
        raise GeometryError("need 0 < overlap < cell_size")
    n = domain_box.dim
    counts = [max(1, math.ceil(w / cell_size - 1e-12)) for w in domain_box.widths]
    steps = [w / k for w, k in zip(domain_box.widths, counts)]
    charts = []
    for idx in np.ndindex(*counts):
        center = tuple(lo + (i + 0.5) * s for lo, i, s in zip(domain_box.lo, idx, steps))
        half = tuple(0.5 * s + 0.5 * overlap for s in steps)
        inner = Box(
            tuple(c - 0.5 * s - overlap for c, s in zip(center, steps)),
            tuple(c + 0.5 * s + overlap for c, s in zip(center, steps)),
        )
        outer = inner.fatten(margin + 1e-9)
        frame = np.eye(n)
        if skew and n >= 2:
            if sum(idx) % 2 == 0:
                frame[0, 1] = skew
            else:
                frame[1, 0] = skew
        charts.append(
            CoverChart(
                "c" + "_".join(map(str, idx)),
                inner,
                outer,
                tuple(tuple(r) for r in frame),
                center,
                half,
            )
        )
    return CoveringP(domain_box, tuple(charts), margin)


# ---------------------------------------------------------------------------
# norms


def _as_values(T, x):
    if callable(T):
        if isinstance(T, MetricField):
            return T(x)
        return np.asarray(T(x), float)
    m = np.asarray(T, float)
    x = np.asarray(x, float)
    return np.broadcast_to(m, x.shape[:-1] + m.shape)


def _background_values(background, x, n):
    x = np.asarray(x, float)
    if background is None:
        return np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n))
    return _as_values(background, x)


def pointwise_opnorm(T, x, background=None):
    """max |T(v,w)| over background-unit v, w (vectorized over points)."""
    x = np.asarray(x, float)
    t = _as_values(T, x)
    n = t.shape[-1]
    b = _background_values(background, x, n)
    L = np.linalg.cholesky(b)
    Li = np.linalg.inv(L)
    m = Li @ t @ np.swapaxes(Li, -1, -2)
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    return np.max(np.abs(np.linalg.eigvalsh(m)), axis=-1)


def _check_region(T, region):
    if not isinstance(region, Box):
        region = Box(*region)
    chart = getattr(T, "chart", None)
    if chart is not None and not chart.domain.contains_box(region):
        raise GeometryError("region is not inside the chart domain")
    return region


def c0_norm(T, region, background=None, n=33):
    region = _check_region(T, region)
    pts, _ = box_grid(region.lo, region.hi, n)
    return float(np.max(pointwise_opnorm(_nudged(T), pts, background)))


def lp_norm(T, region, p, background=None, n=33):
    if p < 1:
        raise GeometryError("p must be >= 1")
    region = _check_region(T, region)
    pts, w = box_grid(region.lo, region.hi, n)
    op = pointwise_opnorm(_nudged(T), pts, background)
    dim = pts.shape[-1]
    vol = np.sqrt(np.linalg.det(_background_values(background, pts, dim)))
    return float(np.sum(w * vol * op**p) ** (1.0 / p))


def _nudged(T):
    if isinstance(T, MetricField) and T.undefined:
        return lambda x: T(x, nudge=True)
    return T


def export_grid_csv(path, points, values, names=("value",)):
    points = np.asarray(points, float)
    values = np.asarray(values, float).reshape(len(points), -1)
    coord_names = ["x", "y", "z", "w"][: points.shape[1]]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(coord_names) + list(names))
        for p, v in zip(points, values):
            wr.writerow([repr(float(c)) for c in p] + [repr(float(c)) for c in v])
