"""Cantor function, the Cantor curve and its surface of revolution.

The Cantor function uses the digit-1 rule: with ternary digits a_i and N the
first index where a_i = 1,

    f(x) = sum_{i<N} (a_i / 2) 2^-(i+1) + 2^-(N+1),

which is the same value whichever ternary expansion is used.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _kernels
from .geometry import GeometryError
from .mollifier import mollifier_constant

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------------------
# Cantor function


def _cantor_exact(x):
    """Exact value for a rational x in [0, 1] (periodic expansions summed in closed form)."""
    if x == 1:
        return Fraction(1)
    r = Fraction(x)
    seen = {}
    digits = []
    while r not in seen:
        seen[r] = len(digits)
        r *= 3
        d = int(r)  # floor, r >= 0
        r -= d
        if d == 1:
            n = len(digits)
            return sum((Fraction(a, 2) / 2 ** (i + 1) for i, a in enumerate(digits)), Fraction(0)) + Fraction(1, 2 ** (n + 1))
        digits.append(d)
        if r == 0:
            return sum((Fraction(a, 2) / 2 ** (i + 1) for i, a in enumerate(digits)), Fraction(0))
    start = seen[r]
    pre = sum((Fraction(a, 2) / 2 ** (i + 1) for i, a in enumerate(digits[:start])), Fraction(0))
    block = sum((Fraction(a, 2) / 2 ** (i + 1) for i, a in enumerate(digits[start:], start)), Fraction(0))
    period = len(digits) - start
    return pre + block / (1 - Fraction(1, 2**period))


def cantor_function(x):
    """Cantor ternary function.

    Fractions and ints give an exact Fraction; a scalar float is evaluated
    exactly (every float is a dyadic rational) and returned as float; arrays
    use 60 ternary digits from scaled 64-bit integers.
    """
    if isinstance(x, (Fraction, int)) and not isinstance(x, bool):
        if not 0 <= x <= 1:
            raise GeometryError(f"cantor_function needs x in [0, 1], got {x}")
        return _cantor_exact(Fraction(x))
    if np.ndim(x) == 0:
        xf = float(x)
        if not (0.0 <= xf <= 1.0):
            raise GeometryError(f"cantor_function needs x in [0, 1], got {xf}")
        return float(_cantor_exact(Fraction(xf)))
    arr = np.asarray(x, float)
    if np.any(~((arr >= 0) & (arr <= 1))):
        raise GeometryError("cantor_function needs x in [0, 1]")
    return _kernels.cantor_values(arr.ravel()).reshape(arr.shape)


def cantor_theta(t):
    """Turning angle 2 pi f(4t/3) on [0, 3/4], then 2 pi up to t = 1."""
    t = np.asarray(t, float)
    if np.any((t < 0) | (t > 1)):
        raise GeometryError("cantor_theta needs t in [0, 1]")
    x = np.minimum(4.0 * t / 3.0, 1.0)
    if t.ndim == 0:
        return TWO_PI * cantor_function(float(x))
    return TWO_PI * cantor_function(x)


def cantor_set_distance(x, depth=40):
    """Distance from x in [0, 1] to the middle-thirds Cantor set."""
    x = np.asarray(x, float).copy()
    out = np.full(x.shape, np.nan)
    scale = np.ones(x.shape)
    live = np.ones(x.shape, bool)
    for _ in range(depth):
        mid = live & (x > 1 / 3) & (x < 2 / 3)
        out[mid] = scale[mid] * np.minimum(x[mid] - 1 / 3, 2 / 3 - x[mid])
        live &= ~mid
        right = live & (x >= 2 / 3)
        x = np.where(live, np.where(right, 3 * x - 2, 3 * x), x)
        scale = np.where(live, scale / 3, scale)
        if not live.any():
            break
    out[live] = 0.0
    return out


# ---------------------------------------------------------------------------
# curve


@dataclass(eq=False)
class CantorCurve:
    """Arclength-parametrized closed curve with turning angle cantor_theta."""

    N: int = 2**20

    def __post_init__(self):
        if self.N < 2**10:
            raise GeometryError("resolution must be at least 2**10")

    @cached_property
    def t(self):
        return np.linspace(0.0, 1.0, self.N + 1)

    @cached_property
    def theta_nodes(self):
        return cantor_theta(self.t)

    @cached_property
    def points(self):
        th = self.theta_nodes
        x = cumulative_trapezoid(np.cos(th), self.t, initial=0.0)
        y = cumulative_trapezoid(np.sin(th), self.t, initial=0.0)
        return np.stack([x, y], -1)

    def theta(self, t):
        return cantor_theta(t)

    def closure_gap(self):
        return float(np.linalg.norm(self.points[-1] - self.points[0]))

    def polygon_length(self):
        return float(np.sum(np.linalg.norm(np.diff(self.points, axis=0), axis=-1)))

    def center_of_mass(self):
        """Arclength-uniform centre of mass."""
        w = np.full(self.N + 1, 1.0 / self.N)
        w[0] = w[-1] = 0.5 / self.N
        return w @ self.points

    def cantor_parameter_distance(self, t):
        """Parameter distance from t to {t : 4t/3 in the Cantor set}."""
        t = np.asarray(t, float)
        x = np.minimum(4 * t / 3, 1.0)
        d = 0.75 * cantor_set_distance(x)
        return np.where(t > 0.75, np.minimum(t - 0.75, 1.0 - t), d)  # t = 1 closes up at t = 0


def cantor_curve(N=2**20):
    return CantorCurve(int(N))


# ---------------------------------------------------------------------------
# curvature dimension


@dataclass
class DimensionEstimate:
    slope: float
    flat: bool
    windows: np.ndarray
    increments: np.ndarray


def curvature_dimension(theta, p, windows=None, domain=(0.0, 1.0)):
    """Slope of log|theta(p+r) - theta(p-r)| against log(2r) over shrinking windows.

    ``theta`` is a callable or an object with a ``theta`` method.  A locally
    constant profile returns slope 0 with ``flat`` set.
    """
    fn = theta.theta if hasattr(theta, "theta") else theta
    r = np.asarray(windows if windows is not None else 3.0 ** -np.arange(3, 16), float)
    if len(r) < 2 or np.any(np.diff(r) >= 0):
        raise GeometryError("windows must shrink")
    lo, hi = domain
    a = np.maximum(p - r, lo)
    b = np.minimum(p + r, hi)
    inc = np.abs(np.asarray(fn(b), float) - np.asarray(fn(a), float))
    ok = inc > 0
    if not ok.any():
        return DimensionEstimate(0.0, True, r, inc)
    if ok.sum() < 2:
        raise GeometryError("too few windows with nonzero turning")
    slope = np.polyfit(np.log(b[ok] - a[ok]), np.log(inc[ok]), 1)[0]
    return DimensionEstimate(float(slope), False, r, inc)


# ---------------------------------------------------------------------------
# surface of revolution


def _kernel_1d(s, eps):
    """1D mollifier eta_eps(s) and its first derivative."""
    c = mollifier_constant(1)
    u = np.asarray(s, float) / eps
    inside = np.abs(u) < 1
    q = np.where(inside, u * u - 1, -1.0)
    val = np.where(inside, c * np.exp(1.0 / q) / eps, 0.0)
    d1 = np.where(inside, val * (-2 * u / q**2) / eps, 0.0)
    return val, d1


@dataclass(eq=False)
class CantorSphere:
    """Revolution of the right half of the centred Cantor curve about the y axis.

    Profile arclength s runs from the bottom pole (s = 0) to the top pole
    (s = 1/2); the metric is ds^2 + rho(s)^2 dphi^2.
    """

    curve: CantorCurve
    s: np.ndarray
    rho: np.ndarray
    theta: np.ndarray
    t: np.ndarray

    @property
    def length(self):
        return float(self.s[-1])

    def param(self, s):
        """Curve parameter t for profile arclength s."""
        s = np.asarray(s, float)
        return np.where(s < 0.125, s + 0.875, s - 0.125)

    def gaussian_curvature(self, s, h=1e-9):
        """Pointwise K = theta' sin(theta) / rho; theta' by a centred difference of width h."""
        s = np.asarray(s, float)
        t = self.param(s)
        th = cantor_theta(t)
        dth = (cantor_theta(np.clip(t + h, 0, 1)) - cantor_theta(np.clip(t - h, 0, 1))) / (2 * h)
        rho = np.interp(s, self.s, self.rho)
        return dth * np.sin(th) / rho

    def smoothed_density(self, eps, s=None):
        """2 pi K_eps rho_eps = -2 pi rho_eps'' on the profile grid, with rho_eps'' = cos(theta) * eta_eps'."""
        h = self.s[1] - self.s[0]
        m = int(math.ceil(eps / h))
        offs = np.arange(-m, m + 1) * h
        _, d1 = _kernel_1d(offs, eps)
        w = d1 * h
        cos = np.cos(self.theta)
        # extend by the flat pole segments (rho' = +-1 there)
        ext = np.concatenate([np.full(m, cos[0]), cos, np.full(m, cos[-1])])
        # rho_eps''(s) = int cos(theta(s')) eta'(s - s') ds'
        rpp = np.convolve(ext, w, mode="valid")
        dens = -TWO_PI * rpp
        return dens if s is None else np.interp(s, self.s, dens)

    def total_curvature(self, eps, collar=1e-3):
        """Integral of the smoothed curvature density away from the pole collars."""
        dens = self.smoothed_density(eps)
        keep = (self.s >= collar) & (self.s <= self.length - collar)
        ss, dd = self.s[keep], dens[keep]
        trap = getattr(np, "trapezoid", None) or np.trapz
        return float(trap(dd, ss))

    def off_orbit_fraction(self, eps, delta=1e-3, collar=1e-3):
        """Share of |curvature| mass farther than delta (in parameter) from the Cantor orbit."""
        dens = np.abs(self.smoothed_density(eps))
        keep = (self.s >= collar) & (self.s <= self.length - collar)
        dist = self.curve.cantor_parameter_distance(self.t)
        far = keep & (dist > delta)
        tot = np.sum(dens[keep])
        return float(np.sum(dens[far]) / tot) if tot > 0 else 0.0


def cantor_sphere(N=2**20, curve=None):
    curve = curve or cantor_curve(N)
    pts = curve.points - curve.center_of_mass()
    t = curve.t
    n = curve.N
    i0 = int(round(0.875 * n))
    i1 = int(round(0.375 * n))
    idx = np.concatenate([np.arange(i0, n), np.arange(0, i1 + 1)])
    rho = pts[idx, 0]
    if np.any(rho < -1e-9):
        raise GeometryError("profile crosses the rotation axis")
    s = np.arange(len(idx)) / n
    return CantorSphere(curve, s, np.maximum(rho, 0.0), curve.theta_nodes[idx] % TWO_PI, t[idx])
