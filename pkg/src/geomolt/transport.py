"""Parallel transport and geodesics by RK4, plus smoothed and non-regular distances."""

import contextlib
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .fields import PiecewiseConstantField
from .geometry import Box, GeometryError, NullPoint
from .mollifier import smooth_wrt_P
from .quadrature import composite_gl
from .riemann import SingularMetricError, checked_inverse, christoffel_from_jet, metric_jet

STEPS_PER_UNIT = 2000


# ---------------------------------------------------------------------------
# curves


@contextlib.contextmanager
def _text_stream(path, mode):
    if hasattr(path, "read") or hasattr(path, "write"):
        yield path
    else:
        with open(path, mode, newline="") as fh:
            yield fh


@dataclass(frozen=True)
class Segment:
    kind: str
    params: tuple
    t0: float
    t1: float

    def _s(self, t):
        return (np.asarray(t, float) - self.t0) / (self.t1 - self.t0)

    def position(self, t):
        s = self._s(t)[..., None]
        if self.kind == "line":
            a, b = (np.asarray(p, float) for p in self.params)
            return a + s * (b - a)
        if self.kind == "arc":
            center, radius, a0, a1 = self.params
            ang = a0 + s[..., 0] * (a1 - a0)
            return np.asarray(center, float) + radius * np.stack([np.cos(ang), np.sin(ang)], -1)
        raise GeometryError(f"unknown segment kind {self.kind}")

    def velocity(self, t):
        dt = self.t1 - self.t0
        s = self._s(t)
        if self.kind == "line":
            a, b = (np.asarray(p, float) for p in self.params)
            return np.broadcast_to((b - a) / dt, s.shape + (len(a),)).copy()
        if self.kind == "arc":
            center, radius, a0, a1 = self.params
            ang = a0 + s * (a1 - a0)
            w = (a1 - a0) / dt
            return radius * w * np.stack([-np.sin(ang), np.cos(ang)], -1)
        raise GeometryError(f"unknown segment kind {self.kind}")


@dataclass(frozen=True)
class CurveSpec:
    """Piecewise regular curve: consecutive segments over sorted breakpoints."""

    segments: tuple
    transversal: tuple = ()

    def __post_init__(self):
        if not self.segments:
            raise GeometryError("curve needs at least one segment")
        for s, nxt in zip(self.segments, self.segments[1:]):
            if abs(s.t1 - nxt.t0) > 1e-14:
                raise GeometryError("segments must share breakpoints")
            gap = np.max(np.abs(s.position(s.t1) - nxt.position(nxt.t0)))
            if gap > 1e-10:
                raise GeometryError(f"curve discontinuous at t={s.t1} (gap {gap:.3g})")
        for s in self.segments:
            tt = np.linspace(s.t0, s.t1, 100)
            if np.min(np.linalg.norm(s.velocity(tt), axis=-1)) <= 1e-12:
                raise GeometryError("segment is not regular")

    @property
    def breakpoints(self):
        return np.array([self.segments[0].t0] + [s.t1 for s in self.segments])

    def position(self, t):
        t = np.asarray(t, float)
        out = np.empty(t.shape + (self.dim,))
        idx = self._index(t)
        for k, seg in enumerate(self.segments):
            m = idx == k
            if np.any(m):
                out[m] = seg.position(t[m])
        return out

    def velocity(self, t):
        t = np.asarray(t, float)
        out = np.empty(t.shape + (self.dim,))
        idx = self._index(t)
        for k, seg in enumerate(self.segments):
            m = idx == k
            if np.any(m):
                out[m] = seg.velocity(t[m])
        return out

    def _index(self, t):
        bp = self.breakpoints
        return np.clip(np.searchsorted(bp, t, side="right") - 1, 0, len(self.segments) - 1)

    @property
    def dim(self):
        return len(np.atleast_1d(self.segments[0].position(self.segments[0].t0)))

    @classmethod
    def polyline(cls, points, transversal=()):
        pts = [tuple(map(float, p)) for p in points]
        segs = tuple(Segment("line", (pts[k], pts[k + 1]), float(k), float(k + 1)) for k in range(len(pts) - 1))
        return cls(segs, tuple(transversal))

    @classmethod
    def line(cls, a, b, t0=0.0, t1=1.0):
        return cls((Segment("line", (tuple(map(float, a)), tuple(map(float, b))), t0, t1),))

    def to_csv(self, path):
        """Write to a path or an open text stream."""
        with _text_stream(path, "w") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "type"])
            for s in self.segments:
                if s.kind != "line":
                    raise GeometryError("only line segments are written to CSV")
                w.writerow([repr(float(s.t0))] + [repr(float(c)) for c in s.params[0]] + ["line"])
            last = self.segments[-1]
            w.writerow([repr(float(last.t1))] + [repr(float(c)) for c in last.params[1]] + ["end"])

    @classmethod
    def from_csv(cls, path):
        with _text_stream(path, "r") as fh:
            rows = list(csv.DictReader(fh))
        segs = []
        for r0, r1 in zip(rows, rows[1:]):
            kind = r0.get("type", "line") or "line"
            if kind != "line":
                raise GeometryError(f"unsupported segment type {kind}")
            segs.append(
                Segment(
                    "line",
                    ((float(r0["x"]), float(r0["y"])), (float(r1["x"]), float(r1["y"]))),
                    float(r0["t"]),
                    float(r1["t"]),
                )
            )
        return cls(tuple(segs))


# ---------------------------------------------------------------------------
# transport along a prescribed curve


@dataclass
class TransportResult:
    breakpoints: np.ndarray
    vectors: np.ndarray  # transported vector at each breakpoint
    norm_drift: float
    params: np.ndarray = None
    positions: np.ndarray = None
    path_vectors: np.ndarray = None
    metrics: np.ndarray = None

    @property
    def final(self):
        return self.vectors[-1]


def _gamma_along(metric, pts):
    g, dg, _ = metric_jet(metric, pts, order=1)
    ginv = checked_inverse(g, pts)
    return g, christoffel_from_jet(g, dg, ginv)


def integrate_transport(metric, curve, v0, steps=None, record=False):
    """RK4 for dv^l/dt = -Gamma^l_ij xdot^i v^j along ``curve``."""
    v = np.array(v0, float)
    bps = curve.breakpoints
    out = [v.copy()]
    rec_t, rec_x, rec_v, rec_g = [], [], [], []
    g0 = None
    drift = 0.0
    for seg in curve.segments:
        length = seg.t1 - seg.t0
        n = steps if steps is not None else max(1, int(math.ceil(STEPS_PER_UNIT * length)))
        h = length / n
        tt = seg.t0 + h * np.arange(2 * n + 1) / 2.0
        pts = seg.position(tt)
        vel = seg.velocity(tt)
        try:
            g, gam = _gamma_along(metric, pts)
        except SingularMetricError as err:
            bad = err.point
            idx = int(np.argmin(np.linalg.norm(pts - bad, axis=-1))) if bad is not None else 0
            raise GeometryError(f"metric singular along the curve at t={tt[idx]:.6g} ({err})") from err
        A = -np.einsum("tlij,ti->tlj", gam, vel)  # dv/dt = A v
        if g0 is None:
            g0 = math.sqrt(max(v @ g[0] @ v, 0.0))
        if record:
            rec_t.append(tt[0::2])
            rec_g.append(g[0::2])
            rec_x.append(pts[0::2])
            rv = [v.copy()]
        for k in range(n):
            a0, am, a1 = A[2 * k], A[2 * k + 1], A[2 * k + 2]
            k1 = a0 @ v
            k2 = am @ (v + 0.5 * h * k1)
            k3 = am @ (v + 0.5 * h * k2)
            k4 = a1 @ (v + h * k3)
            v = v + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if record:
                rv.append(v.copy())
            if g0 > 0 and (k % 50 == 0 or k == n - 1):
                gk = g[2 * k + 2]
                drift = max(drift, abs(math.sqrt(max(v @ gk @ v, 0.0)) - g0) / g0)
        if record:
            rec_v.append(np.array(rv))
        out.append(v.copy())
    res = TransportResult(bps, np.array(out), drift)
    if record:
        res.params = np.concatenate(rec_t)
        res.positions = np.concatenate(rec_x)
        res.path_vectors = np.concatenate(rec_v)
        res.metrics = np.concatenate(rec_g)
    return res


# ---------------------------------------------------------------------------
# geodesics


@dataclass
class GeodesicResult:
    endpoint: np.ndarray
    velocity: np.ndarray
    frame: np.ndarray
    exit_param: float
    complete: bool
    speed_drift: float


def geodesic_shoot(metric, x, v, length, steps=None, frame=None, domain=None):
    """Unit-speed RK4 geodesic from x in direction v, carrying a frame along."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    n = len(x)
    if domain is None and getattr(metric, "chart", None) is not None:
        domain = metric.chart.domain
    g0 = np.asarray(metric(x[None]), float)[0]
    speed = math.sqrt(v @ g0 @ v)
    if speed == 0:
        raise GeometryError("zero initial velocity")
    v = v / speed
    F = np.eye(n) if frame is None else np.asarray(frame, float)
    nsteps = steps if steps is not None else max(1, int(math.ceil(STEPS_PER_UNIT * length)))
    h = length / nsteps

    def rhs(state):
        p = state[:n]
        u = state[n : 2 * n]
        Fm = state[2 * n :].reshape(n, n)
        _, gam = _gamma_along(metric, p[None])
        gam = gam[0]
        acc = -np.einsum("kij,i,j->k", gam, u, u)
        dF = -np.einsum("kij,i,jc->kc", gam, u, Fm)
        return np.concatenate([u, acc, dF.ravel()])

    state = np.concatenate([x, v, F.ravel()])
    drift = 0.0
    t = 0.0
    for k in range(nsteps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * h * k1)
        k3 = rhs(state + 0.5 * h * k2)
        k4 = rhs(state + h * k3)
        new = state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if domain is not None and not bool(domain.contains(new[:n])):
            return GeodesicResult(state[:n], state[n : 2 * n], state[2 * n :].reshape(n, n), t, False, drift)
        state = new
        t += h
        if k % 20 == 0 or k == nsteps - 1:
            gk = np.asarray(metric(state[None, :n]), float)[0]
            u = state[n : 2 * n]
            drift = max(drift, abs(math.sqrt(u @ gk @ u) - 1.0))
    return GeodesicResult(state[:n], state[n : 2 * n], state[2 * n :].reshape(n, n), t, True, drift)


# ---------------------------------------------------------------------------
# non-regular transport


def _field_vertices(source):
    pts = [np.asarray(ns.point, float) for ns in getattr(source, "undefined", ()) if isinstance(ns, NullPoint)]
    if isinstance(source, PiecewiseConstantField):
        for verts, _ in source.pieces:
            pts.extend(np.asarray(verts, float))
    return np.array(pts).reshape(-1, source.dim) if pts else np.zeros((0, source.dim))


def check_avoids_vertices(curve, vertices, tol=1e-9, samples=2000):
    if len(vertices) == 0:
        return
    for seg in curve.segments:
        tt = np.linspace(seg.t0, seg.t1, samples)
        p = seg.position(tt)
        a = p[:-1]
        d = p[1:] - a
        for vert in vertices:
            s = np.clip(np.einsum("ij,ij->i", vert - a, d) / np.maximum(np.einsum("ij,ij->i", d, d), 1e-300), 0, 1)
            dist = np.min(np.linalg.norm(a + s[:, None] * d - vert, axis=-1))
            if dist <= tol:
                raise GeometryError(f"curve passes through the vertex {tuple(vert)}")


@dataclass
class TransportLimit:
    eps: list
    vectors: dict  # covering label -> list of final vectors per eps
    value: np.ndarray
    verdict: str
    successive_diff: float
    covering_diff: float


def transport_limit(ghat, coverings, curve, v0, epsilon_sequence, tol=1e-2, steps=None, vertices=None):
    """Transport under the covering smoothings for each epsilon and judge the limit.

    ``coverings`` is one CoveringP or a sequence; with two or more the
    independence of the limit from the covering is checked as part of the
    verdict.
    """
    if not isinstance(coverings, (list, tuple)):
        coverings = [coverings]
    eps_list = [float(e) for e in epsilon_sequence]
    if not eps_list:
        raise GeometryError("empty epsilon sequence")
    verts = _field_vertices(ghat) if vertices is None else np.asarray(vertices, float)
    check_avoids_vertices(curve, verts)
    v0 = np.asarray(v0, float)
    vecs = {}
    for ci, P in enumerate(coverings):
        seq = []
        for eps in eps_list:
            if not np.any(v0):
                seq.append(np.zeros_like(v0))
                continue
            S = smooth_wrt_P(ghat, P, eps)
            seq.append(integrate_transport(S, curve, v0, steps).final)
        vecs[ci] = seq
    first = vecs[0]
    succ = float(np.max(np.abs(first[-1] - first[-2]))) if len(first) > 1 else math.inf
    cov = 0.0
    for ci in range(1, len(coverings)):
        cov = max(cov, float(np.max(np.abs(vecs[ci][-1] - first[-1]))))
    verdict = "CONVERGED" if succ <= tol and cov <= tol else "UNRESOLVED"
    return TransportLimit(eps_list, vecs, first[-1], verdict, succ, cov)


def angle_with(g, v, e):
    num = np.einsum("...i,...ij,...j->...", v, g, e)
    den = np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v) * np.einsum("...i,...ij,...j->...", e, g, e))
    return np.arccos(np.clip(num / den, -1.0, 1.0))


@dataclass
class DriftResult:
    drift: float
    net_change: float
    window: float
    angle_before: float
    angle_after: float


def edge_angle_drift(ghat, P, edge_point, edge_dir, crossing_dir, v0, epsilon, half_length=0.5, window=None, steps=None):
    """Total variation of the angle between the transported vector and the edge.

    The curve is the straight segment through ``edge_point`` with direction
    ``crossing_dir``; the angle is measured in the smoothed metric inside a
    parameter window around the crossing (default 3 eps on each side).
    """
    p = np.asarray(edge_point, float)
    e = np.asarray(edge_dir, float)
    c = np.asarray(crossing_dir, float)
    c = c / np.linalg.norm(c)
    sin = abs(e[0] * c[1] - e[1] * c[0]) / np.linalg.norm(e)
    if sin < 1e-6:
        raise GeometryError("tangential crossing: curve direction is parallel to the edge")
    curve = CurveSpec.line(p - half_length * c, p + half_length * c, 0.0, 2 * half_length)
    S = smooth_wrt_P(ghat, P, epsilon) if P is not None else ghat
    res = integrate_transport(S, curve, v0, steps, record=True)
    w = 3.0 * epsilon if window is None else window
    tc = half_length
    m = np.abs(res.params - tc) <= w
    ang = angle_with(res.metrics[m], res.path_vectors[m], np.broadcast_to(e, res.path_vectors[m].shape))
    return DriftResult(
        float(np.sum(np.abs(np.diff(ang)))), float(ang[-1] - ang[0]), w, float(ang[0]), float(ang[-1])
    )


# ---------------------------------------------------------------------------
# distances


@dataclass
class GridDistance:
    value: float
    grid_n: int
    history: list
    converged: bool


_OFFSETS = {
    8: [(1, 0), (0, 1), (1, 1), (1, -1)],
    16: [(1, 0), (0, 1), (1, 1), (1, -1), (2, 1), (1, 2), (2, -1), (1, -2)],
}


def _grid_distance(metric, x, y, region, n, connectivity):
    """Dijkstra on a lattice anchored at one endpoint, about n nodes across.

    The anchor is the lexicographically smaller endpoint so that swapping
    the endpoints reuses the same lattice.
    """
    if tuple(y) < tuple(x):
        x, y = y, x
    lo = np.asarray(region.lo, float)
    hi = np.asarray(region.hi, float)
    hx = (hi - lo) / (n - 1)
    kmin = np.ceil((lo - x) / hx - 1e-9).astype(int)
    kmax = np.floor((hi - x) / hx + 1e-9).astype(int)
    origin = x + kmin * hx
    nx, ny = (kmax - kmin + 1).tolist()
    # metric sampled on the refined lattice that holds every edge midpoint
    sub = 2 if connectivity == 8 else 4
    mx, my = sub * (nx - 1) + 1, sub * (ny - 1) + 1
    ax = [origin[0] + hx[0] / sub * np.arange(mx), origin[1] + hx[1] / sub * np.arange(my)]
    G = np.stack(np.meshgrid(*ax, indexing="ij"), -1).reshape(-1, 2)
    gm = np.asarray(metric(G), float).reshape(mx, my, 2, 2)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    rows, cols, wts = [], [], []
    for di, dj in _OFFSETS[connectivity]:
        i1, j1 = ii + di, jj + dj
        ok = (i1 >= 0) & (i1 < nx) & (j1 >= 0) & (j1 < ny)
        i0, j0, i1, j1 = ii[ok], jj[ok], i1[ok], j1[ok]
        g = gm[(sub * (i0 + i1)) // 2, (sub * (j0 + j1)) // 2]
        dvec = np.array([di * hx[0], dj * hx[1]])
        rows.append(i0 * ny + j0)
        cols.append(i1 * ny + j1)
        wts.append(np.sqrt(np.maximum(np.einsum("i,pij,j->p", dvec, g, dvec), 0.0)))
    src = int(-kmin[0]) * ny + int(-kmin[1])
    f = (np.asarray(y) - origin) / hx
    near = np.rint(f)
    N = nx * ny
    if np.all(np.abs(f - near) < 1e-9):
        dst = int(near[0]) * ny + int(near[1])
    else:
        dst = N
        N += 1
        base = np.minimum(np.floor(f).astype(int), [nx - 2, ny - 2])
        for di in (0, 1):
            for dj in (0, 1):
                ci, cj = base[0] + di, base[1] + dj
                corner = origin + hx * np.array([ci, cj])
                dvec = corner - y
                gmid = np.asarray(metric(((y + corner) / 2)[None]), float)[0]
                rows.append(np.array([dst]))
                cols.append(np.array([ci * ny + cj]))
                wts.append(np.array([math.sqrt(max(dvec @ gmid @ dvec, 0.0))]))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    w = np.maximum(np.concatenate(wts), 1e-300)
    A = coo_matrix((w, (r, c)), shape=(N, N)).tocsr()
    d = dijkstra(A, directed=False, indices=src)
    val = float(d[dst])
    if not np.isfinite(val):
        raise GeometryError("endpoints are disconnected on the grid")
    return val


def distance_smoothed(metric, x, y, grid_n=17, region=None, rel_tol=0.01, max_n=257, connectivity=8, full=False):
    """Shortest-path distance on a refining grid graph with metric edge lengths."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if region is None:
        chart = getattr(metric, "chart", None)
        if chart is None:
            raise GeometryError("region required for a metric without chart")
        region = chart.domain
    if not isinstance(region, Box):
        region = Box(*region)
    # closed region: endpoints may sit on the boundary
    if not (region.contains(x, -1e-12) and region.contains(y, -1e-12)):
        raise GeometryError("endpoints must lie inside the region")
    if connectivity not in _OFFSETS:
        raise GeometryError("connectivity must be 8 or 16")
    hist = []
    n = grid_n
    converged = False
    while True:
        hist.append((n, _grid_distance(metric, x, y, region, n, connectivity)))
        if len(hist) >= 2:
            a, b = hist[-2][1], hist[-1][1]
            if abs(a - b) <= rel_tol * max(abs(a), abs(b), 1e-300):
                converged = True
                break
        if 2 * (n - 1) + 1 > max_n:
            break
        n = 2 * (n - 1) + 1
    out = GridDistance(hist[-1][1], hist[-1][0], hist, converged)
    return out if full else out.value


def segment_length(metric, a, b, nodes=16, panels=32):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    t, w = composite_gl(np.linspace(0.0, 1.0, panels + 1), nodes)
    pts = a + t[:, None] * (b - a)
    g = np.asarray(metric(pts), float)
    d = b - a
    return float(np.sum(w * np.sqrt(np.einsum("i,pij,j->p", d, g, d))))


@dataclass
class DistanceEstimate:
    endpoints: tuple
    eps: list
    distances: list
    verdict: str
    value: float = None
    liminf: float = None
    limsup: float = None


def classify_trend(values, band=0.02, growth=0.2, contraction=0.75, verdict_tol=0.05):
    """Verdict from the tail of a sequence indexed by decreasing epsilon."""
    v = [float(a) for a in values]
    tail = v[-3:]
    if len(tail) < 3:
        raise GeometryError("at least three epsilon values are required for a verdict")
    hi, lo = max(tail), min(tail)
    if hi - lo <= band * max(abs(hi), 1e-300):
        return "CONVERGED", tail[-1], lo, hi
    if all(b >= (1 + growth) * a for a, b in zip(tail, tail[1:])):
        return "DIVERGING", None, lo, hi
    d1, d2 = tail[1] - tail[0], tail[2] - tail[1]
    if d1 * d2 > 0 and abs(d2) <= contraction * abs(d1):
        r = abs(d2) / abs(d1)
        rest = abs(d2) * r / (1 - r)
        if rest <= verdict_tol:
            limit = tail[-1] + math.copysign(rest, d2)
            return "CONVERGED", limit, lo, hi
    return "OSCILLATING", None, lo, hi


def nonregular_distance(
    ghat,
    P,
    x,
    y,
    epsilon_sequence,
    grid_n=17,
    region=None,
    path="geodesic",
    verdict_tol=0.05,
    connectivity=8,
    max_n=257,
):
    """d_eps under the covering smoothing for each epsilon, with a trend verdict.

    ``path="segment"`` measures the straight chart segment instead of the
    shortest path.  The canonical smoothing family only bounds the
    supremum over approximating families from below.
    """
    eps_list = [float(e) for e in epsilon_sequence]
    if not eps_list:
        raise GeometryError("empty epsilon sequence")
    if region is None:
        region = P.domain
    dists = []
    for eps in eps_list:
        S = smooth_wrt_P(ghat, P, eps)
        if path == "segment":
            dists.append(segment_length(S, x, y))
        else:
            dists.append(distance_smoothed(S, x, y, grid_n, region, connectivity=connectivity, max_n=max_n))
    if len(dists) >= 3:
        verdict, value, lo, hi = classify_trend(dists, verdict_tol=verdict_tol)
    else:
        verdict, value, lo, hi = "OSCILLATING", None, min(dists), max(dists)
    return DistanceEstimate((tuple(np.ravel(x)), tuple(np.ravel(y))), eps_list, dists, verdict, value, lo, hi)
