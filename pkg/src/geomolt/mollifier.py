"""The standard mollifier and smoothing of tensor fields.

Two operators are provided: smoothing against a single background metric
and smoothing glued from per-chart Euclidean smoothings by a partition of
unity.  On Euclidean backgrounds the value, first and second derivatives
are convolutions against exact kernel derivatives.  Piecewise-constant
fields on polygons are convolved exactly through boundary integrals.
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from . import _kernels
from .backgrounds import EuclideanBackground, SphereBackground, polar_unit_nodes, sphere_ball_normalizer
from .fields import PiecewiseConstantField
from .geometry import (
    Box,
    CoveringP,
    GeometryError,
    MetricField,
    c0_norm,
    fd_jet,
    lp_norm,
    pointwise_opnorm,
)

CHUNK = 256


@lru_cache(maxsize=None)
def mollifier_constant(dim):
    """C with C * integral of exp(1/(|z|^2-1)) over the unit ball = 1."""
    if dim == 2:
        return _kernels.MOLLIFIER_C2
    prof = lambda r: math.exp(1.0 / (r * r - 1.0)) if r < 1 else 0.0
    if dim == 1:
        val = 2 * quad(prof, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    else:
        area = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
        val = area * quad(lambda r: prof(r) * r ** (dim - 1), 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return 1.0 / val


@lru_cache(maxsize=None)
def second_moment(dim):
    """Integral of z_1^2 against the normalized unit-scale kernel."""
    c = mollifier_constant(dim)
    prof = lambda r: math.exp(1.0 / (r * r - 1.0)) if r < 1 else 0.0
    if dim == 1:
        return 2 * c * quad(lambda r: prof(r) * r * r, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    area = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    radial = quad(lambda r: prof(r) * r ** (dim + 1), 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return c * area * radial / dim


def _check_eps(eps):
    if not (eps > 0):
        raise GeometryError(f"epsilon must be positive, got {eps}")


class MollifierKernel:
    """eta(x, y, eps) for a background; normalized over the geodesic eps-ball."""

    def __init__(self, epsilon, dim=2, background=None):
        _check_eps(epsilon)
        self.epsilon = float(epsilon)
        self.background = background or EuclideanBackground(dim=dim)
        self.dim = self.background.dim
        if isinstance(self.background, EuclideanBackground):
            self.normalization = self.epsilon**self.dim / mollifier_constant(self.dim)
        elif isinstance(self.background, SphereBackground):
            if self.epsilon >= math.pi:
                raise GeometryError("epsilon exceeds the injectivity radius pi")
            self.normalization = sphere_ball_normalizer(self.epsilon)
        else:
            self.normalization = None  # point dependent, computed by ball quadrature

    @property
    def bound(self):
        """Constant with eta <= bound / eps^n."""
        if self.normalization is None:
            raise GeometryError("bound requires a homogeneous background")
        return math.exp(-1.0) * self.epsilon**self.dim / self.normalization

    def _normalizer_at(self, x):
        if self.normalization is not None:
            return self.normalization
        _, dv, r, _ = self.background.ball(np.asarray(x, float)[None], self.epsilon)
        return float(np.sum(dv[0] * _profile(r[0])))

    def __call__(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        d = self.background.distance(x, y) / self.epsilon
        val = _profile(d)
        if self.normalization is not None:
            return val / self.normalization
        return val / self._normalizer_at(x)

    def derivative(self, x, y, multi_index):
        """Exact x-derivative of eta (Euclidean backgrounds), |multi_index| <= 2."""
        mi = tuple(int(i) for i in multi_index)
        if len(mi) != self.dim or any(i < 0 for i in mi):
            raise GeometryError("multi-index must have one nonnegative entry per coordinate")
        order = sum(mi)
        if order > 2:
            raise GeometryError("kernel derivatives are available up to order 2")
        if not isinstance(self.background, EuclideanBackground):
            raise GeometryError("kernel derivatives require a Euclidean background")
        eps = self.epsilon
        A = self.background.frame
        G = A.T @ A
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        diff = x - y
        s = np.einsum("...i,ij,...j->...", diff, G, diff) / eps**2
        inside = s < 1.0
        q = np.where(inside, s - 1.0, -1.0)
        eta = np.where(inside, np.exp(1.0 / q), 0.0) * mollifier_constant(self.dim) / eps**self.dim
        if order == 0:
            return eta
        ds = 2.0 * (diff @ G) / eps**2
        p1 = -1.0 / q**2
        p2 = 2.0 / q**3
        idx = [i for i, k in enumerate(mi) for _ in range(k)]
        if order == 1:
            return eta * p1 * ds[..., idx[0]]
        k, l = idx
        return eta * ((p1**2 + p2) * ds[..., k] * ds[..., l] + p1 * 2.0 * G[k, l] / eps**2)


def _profile(s):
    s = np.asarray(s, float)
    inside = s < 1.0
    q = np.where(inside, s * s - 1.0, -1.0)
    return np.where(inside, np.exp(1.0 / q), 0.0)


def kernel_eval(x, y, epsilon, background=None):
    x = np.asarray(x, float)
    return MollifierKernel(epsilon, x.shape[-1], background)(x, y)


def kernel_derivative_eval(x, y, epsilon, multi_index, background=None):
    x = np.asarray(x, float)
    return MollifierKernel(epsilon, x.shape[-1], background).derivative(x, y, multi_index)


# ---------------------------------------------------------------------------
# engines: one Euclidean chart or one curved background


@lru_cache(maxsize=32)
def _euclid_weights(dim, radial, angular):
    """Normalized value weights, and unit-scale derivative weight factors."""
    z, r, w = polar_unit_nodes(dim, radial, angular)
    prof = _profile(r)
    w0 = w * prof
    w0 = w0 / w0.sum()
    s = r * r
    q = s - 1.0
    f1 = 2.0 / q**2  # grad(eta)/eta in x, unit scale: f1 * z
    a2 = 4.0 / q**4 + 8.0 / q**3
    b2 = -2.0 / q**2
    return z, w0, f1, a2, b2


class _EuclideanEngine:
    def __init__(self, source, eps, frame, radial=33, angular=64):
        self.source = source
        self.eps = eps
        self.frame = np.asarray(frame, float)
        self.dim = self.frame.shape[0]
        self.exact = (
            isinstance(source, PiecewiseConstantField) and self.dim == 2 and source.pieces
        )
        if self.exact:
            A = self.frame
            self.pieces = [(v @ A.T, m) for v, m in source.pieces]
            self.default = source.default
        else:
            z, w0, f1, a2, b2 = _euclid_weights(self.dim, radial, angular)
            Ainv = np.linalg.inv(self.frame)
            self.offsets = eps * z @ Ainv.T
            self.w0 = w0
            az = z @ self.frame  # (A^T z) per node
            w1 = (w0 * f1)[:, None] * az / eps
            w1 -= w0[:, None] * w1.sum(axis=0)[None, :]
            G = self.frame.T @ self.frame
            w2 = (w0 * a2)[:, None, None] * az[:, :, None] * az[:, None, :] + (w0 * b2)[
                :, None, None
            ] * G[None]
            w2 = w2 / eps**2
            w2 -= w0[:, None, None] * w2.sum(axis=0)[None]
            self.w1 = w1
            self.w2 = w2

    def jet(self, x, order=2):
        x = np.asarray(x, float).reshape(-1, self.dim)
        if self.exact:
            return self._exact_jet(x, order)
        n = self.dim
        val = np.empty((len(x), n, n))
        d = np.empty((len(x), n, n, n)) if order >= 1 else None
        dd = np.empty((len(x), n, n, n, n)) if order >= 2 else None
        for s in range(0, len(x), CHUNK):
            xs = x[s : s + CHUNK]
            y = xs[:, None, :] + self.offsets[None]
            t = self.source(y.reshape(-1, n), nudge=True) if isinstance(self.source, MetricField) else np.asarray(self.source(y.reshape(-1, n)), float)
            t = t.reshape(len(xs), -1, n, n)
            val[s : s + CHUNK] = np.einsum("q,pqij->pij", self.w0, t)
            if order >= 1:
                d[s : s + CHUNK] = np.einsum("qk,pqij->pijk", self.w1, t)
            if order >= 2:
                dd[s : s + CHUNK] = np.einsum("qkl,pqij->pijkl", self.w2, t)
        return val, d, dd

    def _exact_jet(self, x, order):
        A = self.frame
        xa = x @ A.T
        val = np.zeros((len(x), 2, 2))
        d = np.zeros((len(x), 2, 2, 2)) if order >= 1 else None
        dd = np.zeros((len(x), 2, 2, 2, 2)) if order >= 2 else None
        total = np.zeros(len(x))
        gtot = np.zeros((len(x), 2))
        htot = np.zeros((len(x), 2, 2))
        for verts, m in self.pieces:
            c, g, h = _kernels.polygon_jets(xa, verts, self.eps, max(order, 0))
            val += c[:, None, None] * m
            total += c
            if order >= 1:
                g = g @ A
                gtot += g
                d += m[None, :, :, None] * g[:, None, None, :]
            if order >= 2:
                h = np.einsum("pab,ak,bl->pkl", h, A, A)
                htot += h
                dd += m[None, :, :, None, None] * h[:, None, None, :, :]
        if self.default is not None:
            m = self.default
            val += (1.0 - total)[:, None, None] * m
            if order >= 1:
                d -= m[None, :, :, None] * gtot[:, None, None, :]
            if order >= 2:
                dd -= m[None, :, :, None, None] * htot[:, None, None, :, :]
        return val, d, dd


class _CurvedEngine:
    """Quadrature over geodesic balls with parallel-transported components."""

    def __init__(self, source, eps, background, radial=33, angular=64):
        self.source = source
        self.eps = eps
        self.background = background
        self.radial = radial
        self.angular = angular
        self.dim = background.dim

    def value(self, x):
        x = np.asarray(x, float).reshape(-1, self.dim)
        n = self.dim
        out = np.empty((len(x), n, n))
        for s in range(0, len(x), CHUNK):
            xs = x[s : s + CHUNK]
            y, dv, r, trans = self.background.ball(xs, self.eps, self.radial, self.angular)
            w = dv * _profile(r)
            w = w / w.sum(axis=1, keepdims=True)
            t = self.source(y.reshape(-1, n), nudge=True) if isinstance(self.source, MetricField) else np.asarray(self.source(y.reshape(-1, n)), float)
            t = t.reshape(y.shape[:2] + (n, n))
            if trans is not None:
                t = np.einsum("pqab,pqai,pqbj->pqij", t, trans, trans)
            out[s : s + CHUNK] = np.einsum("pq,pqij->pij", w, t)
        return out

    def jet(self, x, order=2):
        x = np.asarray(x, float)
        if order == 0:
            return self.value(x), None, None
        return fd_jet(self.value, x.reshape(-1, self.dim), order)


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SmoothedTensor:
    """Smooth evaluator of a mollified field with value and derivative access.

    ``jet(x)`` returns (value, d, dd) with d[..., i, j, k] = d_k T_ij and
    dd[..., i, j, k, l] = d_k d_l T_ij.
    """

    source: object
    mode: str
    epsilon: float
    region: object = None
    background: object = None
    covering: object = None
    radial: int = 33
    angular: int = 64
    _engines: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.source.dim if hasattr(self.source, "dim") else self.background.dim

    @property
    def chart(self):
        return getattr(self.source, "chart", None)

    def _engine(self, frame=None):
        key = None if frame is None else tuple(np.asarray(frame, float).ravel())
        if key not in self._engines:
            if frame is not None:
                self._engines[key] = _EuclideanEngine(self.source, self.epsilon, frame, self.radial, self.angular)
            elif isinstance(self.background, EuclideanBackground):
                self._engines[key] = _EuclideanEngine(
                    self.source, self.epsilon, self.background.frame, self.radial, self.angular
                )
            else:
                self._engines[key] = _CurvedEngine(self.source, self.epsilon, self.background, self.radial, self.angular)
        return self._engines[key]

    def _check_points(self, x):
        if self.region is not None and self.mode == "BACKGROUND":
            lo = np.asarray(self.region.lo) - 1e-12
            hi = np.asarray(self.region.hi) + 1e-12
            if np.any((x < lo) | (x > hi)):
                raise GeometryError("evaluation point outside the smoothing region")

    def jet(self, x, order=2):
        x = np.asarray(x, float)
        shape = x.shape[:-1]
        n = x.shape[-1]
        xf = x.reshape(-1, n)
        self._check_points(xf)
        if self.mode == "BACKGROUND":
            val, d, dd = self._engine().jet(xf, order)
        else:
            val, d, dd = self._covering_jet(xf, order)
        res = [val.reshape(shape + (n, n))]
        res.append(None if d is None else d.reshape(shape + (n,) * 3))
        res.append(None if dd is None else dd.reshape(shape + (n,) * 4))
        return tuple(res)

    def _covering_jet(self, x, order):
        P = self.covering
        n = x.shape[-1]
        psi, dpsi, ddpsi = P.psi_jet(x)
        val = np.zeros((len(x), n, n))
        d = np.zeros((len(x), n, n, n)) if order >= 1 else None
        dd = np.zeros((len(x), n, n, n, n)) if order >= 2 else None
        groups = {}
        for w, ch in enumerate(P.charts):
            groups.setdefault(tuple(np.ravel(ch.frame)), []).append(w)
        for key, members in groups.items():
            active = np.any(psi[:, members] > 0, axis=1)
            if not active.any():
                continue
            xa = x[active]
            tv, td, tdd = self._engine(np.reshape(key, (n, n))).jet(xa, order)
            ps = psi[active][:, members].sum(axis=1)
            val[active] += ps[:, None, None] * tv
            if order >= 1:
                dps = dpsi[active][:, members].sum(axis=1)
                d[active] += dps[:, None, None, :] * tv[..., None] + ps[:, None, None, None] * td
            if order >= 2:
                ddps = ddpsi[active][:, members].sum(axis=1)
                dd[active] += (
                    ddps[:, None, None] * tv[..., None, None]
                    + dps[:, None, None, :, None] * td[..., None, :]
                    + dps[:, None, None, None, :] * td[..., :, None]
                    + ps[:, None, None, None, None] * tdd
                )
        return val, d, dd

    def __call__(self, x, nudge=False):
        return self.jet(x, order=0)[0]

    def value(self, x):
        return self(x)

    def derivative(self, x):
        return self.jet(x, order=1)[1]

    def second_derivative(self, x):
        return self.jet(x, order=2)[2]


def smooth_wrt_background(T, region, epsilon, background=None, radial=33, angular=64):
    """Mollify T on ``region`` against a background metric (Euclidean by default)."""
    _check_eps(epsilon)
    if region is not None and not isinstance(region, Box):
        region = Box(*region)
    dim = T.dim if hasattr(T, "dim") else region.dim
    background = background or EuclideanBackground(dim=dim)
    inj = background.injectivity_radius(region)
    if epsilon >= inj:
        raise GeometryError(f"epsilon {epsilon} must be below the injectivity radius {inj}")
    chart = getattr(T, "chart", None)
    if region is not None and chart is not None:
        rad = background.euclidean_radius(epsilon)
        if rad is not None:
            gap = min(
                min(r_lo - c_lo, c_hi - r_hi)
                for r_lo, r_hi, c_lo, c_hi in zip(region.lo, region.hi, chart.domain.lo, chart.domain.hi)
            )
            if rad >= gap:
                raise GeometryError(
                    f"epsilon {epsilon} too large: ball radius {rad:.4g} >= dist(U, chart boundary) {gap:.4g}"
                )
    return SmoothedTensor(T, "BACKGROUND", float(epsilon), region, background, None, radial, angular)


def smooth_wrt_P(T, P, epsilon, radial=33, angular=64):
    """Partition-of-unity glued smoothing over the charts of ``P``."""
    _check_eps(epsilon)
    if not isinstance(P, CoveringP):
        raise GeometryError("P must be a CoveringP")
    if epsilon >= 1.0:
        raise GeometryError(f"epsilon {epsilon} must be < 1")
    if epsilon >= P.margin:
        raise GeometryError(f"epsilon {epsilon} must be below the chart margin {P.margin}")
    chart = getattr(T, "chart", None)
    if chart is not None:
        for c in P.charts:
            rad = EuclideanBackground(np.asarray(c.frame)).euclidean_radius(epsilon)
            lo = np.asarray(c.center) - np.asarray(c.half_width) - rad
            hi = np.asarray(c.center) + np.asarray(c.half_width) + rad
            if np.any(lo < np.asarray(chart.domain.lo)) or np.any(hi > np.asarray(chart.domain.hi)):
                raise GeometryError(
                    f"epsilon {epsilon} too large: kernel support of chart {c.id} leaves the field's chart"
                )
    return SmoothedTensor(T, "COVERING", float(epsilon), None, None, P, radial, angular)


# ---------------------------------------------------------------------------


_MODE_NEEDS = {"AE": None, "C0LOC": {"SMOOTH", "C0"}, "LPLOC": {"SMOOTH", "C0", "LPLOC"}}


def convergence_report(
    T,
    mode,
    epsilon_sequence,
    region,
    p=2,
    smoother="background",
    covering=None,
    background=None,
    n=33,
    samples=200,
    seed=0,
    noise_floor=1e-10,
):
    """Errors of the smoothed field against the source for each epsilon."""
    eps_list = [float(e) for e in epsilon_sequence]
    if not eps_list:
        raise GeometryError("empty epsilon sequence")
    mode = mode.upper()
    if mode.startswith("LPLOC"):
        mode = "LPLOC"
    if mode not in _MODE_NEEDS:
        raise GeometryError(f"unknown mode {mode}")
    if not isinstance(region, Box):
        region = Box(*region)
    reg = getattr(getattr(T, "regularity", None), "value", "SMOOTH")
    need = _MODE_NEEDS[mode]
    if need is not None and reg not in need:
        warnings.warn(f"mode {mode} assumes more regularity than the source's {reg}", stacklevel=2)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(region.lo, region.hi, size=(samples, region.dim)) if mode == "AE" else None
    errors = []
    for eps in eps_list:
        if smoother == "covering":
            S = smooth_wrt_P(T, covering, eps)
        else:
            S = smooth_wrt_background(T, region, eps, background)

        def diff(x, S=S):
            src = T(x, nudge=True) if isinstance(T, MetricField) else T(x)
            return S(x) - src

        if mode == "AE":
            errors.append(float(np.max(pointwise_opnorm(diff, pts))))
        elif mode == "C0LOC":
            errors.append(c0_norm(diff, region, n=n))
        else:
            errors.append(lp_norm(diff, region, p, n=n))
    monotone = all(b <= a + noise_floor for a, b in zip(errors, errors[1:]))
    return {"mode": mode, "eps": eps_list, "errors": errors, "monotone": monotone, "noise_floor": noise_floor}
