"""Background metrics for intrinsic smoothing: ball quadrature, distance and transport.

Every background exposes ``ball(points, eps, radial, angular)`` returning
quadrature nodes of the geodesic eps-ball around each point, the volume
weights dV (including the polar Jacobian), the normalized radius of each
node and the matrix carrying coordinate vectors at the centre to the node
by parallel transport along the radial geodesic (None when it is the
identity).
"""

import math

import numpy as np
from scipy.integrate import quad

from .geometry import GeometryError
from .quadrature import gauss_legendre
from .riemann import christoffel_from_jet, metric_jet


def polar_unit_nodes(dim, radial=33, angular=64):
    """Unit-ball nodes z, radii r and Lebesgue weights for dim 1, 2, 3."""
    xr, wr = gauss_legendre(radial)
    r = 0.5 * (xr + 1.0)
    wr = 0.5 * wr
    if dim == 1:
        x, w = gauss_legendre(radial)
        return x[:, None].copy(), np.abs(x), w.copy()
    if dim == 2:
        a = 2 * math.pi * np.arange(angular) / angular
        R, A = np.meshgrid(r, a, indexing="ij")
        W = np.outer(wr * r, np.full(angular, 2 * math.pi / angular))
        z = np.stack([R * np.cos(A), R * np.sin(A)], axis=-1).reshape(-1, 2)
        return z, R.ravel(), W.ravel()
    if dim == 3:
        nc = max(8, angular // 4)
        na = max(8, angular // 2)
        xc, wc = gauss_legendre(nc)
        a = 2 * math.pi * np.arange(na) / na
        R, C, A = np.meshgrid(r, xc, a, indexing="ij")
        S = np.sqrt(1 - C**2)
        W = (wr * r * r)[:, None, None] * wc[None, :, None] * (2 * math.pi / na)
        W = np.broadcast_to(W, R.shape)
        z = np.stack([R * S * np.cos(A), R * S * np.sin(A), R * C], axis=-1).reshape(-1, 3)
        return z, R.ravel(), W.ravel()
    raise GeometryError("ball quadrature is implemented for dimensions 1 to 3")


class EuclideanBackground:
    """Constant metric A^T A; geodesic balls are ellipsoids, transport is trivial."""

    name = "EUCLIDEAN"

    def __init__(self, frame=None, dim=2):
        self.frame = np.eye(dim) if frame is None else np.asarray(frame, float)
        self.dim = self.frame.shape[0]
        self.frame_inv = np.linalg.inv(self.frame)
        self.det = abs(np.linalg.det(self.frame))

    def metric(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(self.frame.T @ self.frame, x.shape[:-1] + (self.dim,) * 2)

    def distance(self, x, y):
        d = (np.asarray(y, float) - np.asarray(x, float)) @ self.frame.T
        return np.linalg.norm(d, axis=-1)

    def injectivity_radius(self, region=None):
        return math.inf

    def euclidean_radius(self, eps):
        """Largest coordinate displacement of a background eps-ball."""
        return eps * np.linalg.norm(self.frame_inv, 2)

    def ball(self, points, eps, radial=33, angular=64):
        z, r, w = polar_unit_nodes(self.dim, radial, angular)
        pts = np.asarray(points, float).reshape(-1, self.dim)
        y = pts[:, None, :] + eps * (z @ self.frame_inv.T)[None]
        dv = np.broadcast_to(w * eps**self.dim, y.shape[:2])
        return y, dv, np.broadcast_to(r, y.shape[:2]), None

    def to_dict(self):
        return {"type": self.name, "frame": self.frame.tolist()}


class SphereBackground:
    """Unit round sphere in the chart (polar angle theta, azimuth phi)."""

    name = "SPHERE"
    dim = 2

    def metric(self, x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = np.sin(x[..., 0]) ** 2
        return out

    @staticmethod
    def embed(x):
        th, ph = x[..., 0], x[..., 1]
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], -1)

    @staticmethod
    def coordinate_basis(x):
        th, ph = x[..., 0], x[..., 1]
        e_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], -1)
        e_ph = np.stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), 0 * th], -1)
        return e_th, e_ph

    def distance(self, x, y):
        a = self.embed(np.asarray(x, float))
        b = self.embed(np.asarray(y, float))
        return np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.sum(a * b, axis=-1))

    def injectivity_radius(self, region=None):
        return math.pi

    def euclidean_radius(self, eps):
        return None

    def ball(self, points, eps, radial=33, angular=64):
        if eps >= math.pi:
            raise GeometryError(f"epsilon {eps} exceeds the injectivity radius pi")
        pts = np.asarray(points, float).reshape(-1, 2)
        if np.any(np.sin(pts[:, 0]) <= math.sin(eps)):
            raise GeometryError("geodesic ball reaches a pole of the (theta, phi) chart")
        xr, wr = gauss_legendre(radial)
        r = 0.5 * (xr + 1.0)
        wr = 0.5 * wr
        a = 2 * math.pi * np.arange(angular) / angular
        R, A = np.meshgrid(r * eps, a, indexing="ij")
        R, A = R.ravel(), A.ravel()
        W = np.outer(wr * eps, np.full(angular, 2 * math.pi / angular)).ravel() * np.sin(R)
        P = self.embed(pts)[:, None, :]
        e_th, e_ph = self.coordinate_basis(pts)
        s = np.sin(pts[:, 0])[:, None, None]
        u1 = e_th[:, None, :]
        u2 = e_ph[:, None, :] / s
        u = np.cos(A)[None, :, None] * u1 + np.sin(A)[None, :, None] * u2
        cr, sr = np.cos(R)[None, :, None], np.sin(R)[None, :, None]
        Y = cr * P + sr * u
        th = np.arccos(np.clip(Y[..., 2], -1, 1))
        ph = np.arctan2(Y[..., 1], Y[..., 0])
        ph = pts[:, 1:2] + (ph - pts[:, 1:2] + math.pi) % (2 * math.pi) - math.pi
        y = np.stack([th, ph], -1)
        vel = -sr * P + cr * u
        f_th, f_ph = self.coordinate_basis(y)
        sy2 = np.sin(th) ** 2
        trans = np.empty(y.shape[:2] + (2, 2))
        for col, V in enumerate((e_th, e_ph)):
            V = np.broadcast_to(V[:, None, :], Y.shape)
            vu = np.sum(V * u, -1, keepdims=True)
            TV = vu * vel + (V - vu * u)
            trans[..., 0, col] = np.sum(TV * f_th, -1)
            trans[..., 1, col] = np.sum(TV * f_ph, -1) / sy2
        return y, np.broadcast_to(W, y.shape[:2]), np.broadcast_to(R / eps, y.shape[:2]), trans

    def to_dict(self):
        return {"type": self.name}


class NumericBackground:
    """A smooth 2D metric given by a callable; balls by RK4 geodesic shooting."""

    name = "NUMERIC2D"
    dim = 2

    def __init__(self, metric, inj_radius, steps_per_unit=400, dalpha=1e-4):
        self.metric_fn = metric
        self.inj = float(inj_radius)
        self.steps_per_unit = steps_per_unit
        self.dalpha = dalpha

    def metric(self, x):
        return np.asarray(self.metric_fn(np.asarray(x, float)), float)

    def injectivity_radius(self, region=None):
        return self.inj

    def euclidean_radius(self, eps):
        return None

    def _rhs(self, state):
        # state: (..., 2 + 2 + 4): position, velocity, transported basis columns
        x = state[..., 0:2]
        v = state[..., 2:4]
        F = state[..., 4:8].reshape(state.shape[:-1] + (2, 2))
        g, dg, _ = metric_jet(self.metric_fn, x.reshape(-1, 2), order=1)
        gam = christoffel_from_jet(g, dg).reshape(x.shape[:-1] + (2, 2, 2))
        acc = -np.einsum("...kij,...i,...j->...k", gam, v, v)
        dF = -np.einsum("...kij,...i,...jc->...kc", gam, v, F)
        return np.concatenate([v, acc, dF.reshape(dF.shape[:-2] + (4,))], axis=-1)

    def _shoot(self, state, length):
        nsteps = max(1, int(math.ceil(length * self.steps_per_unit)))
        h = length / nsteps
        for _ in range(nsteps):
            k1 = self._rhs(state)
            k2 = self._rhs(state + 0.5 * h * k1)
            k3 = self._rhs(state + 0.5 * h * k2)
            k4 = self._rhs(state + h * k3)
            state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return state

    def ball(self, points, eps, radial=33, angular=64):
        if eps >= self.inj:
            raise GeometryError(f"epsilon {eps} exceeds the declared injectivity radius {self.inj}")
        from .riemann import orthonormalize

        pts = np.asarray(points, float).reshape(-1, 2)
        xr, wr = gauss_legendre(radial)
        r = 0.5 * (xr + 1.0) * eps
        wr = 0.5 * wr * eps
        base = 2 * math.pi * np.arange(angular) / angular
        out_y = np.empty((len(pts), radial, angular, 2))
        out_T = np.empty((len(pts), radial, angular, 2, 2))
        out_J = np.empty((len(pts), radial, angular))
        for p, x0 in enumerate(pts):
            w = orthonormalize(self.metric_fn, np.eye(2), x0)
            alphas = np.concatenate([base, base + self.dalpha, base - self.dalpha])
            dirs = np.cos(alphas)[:, None] * w[:, 0] + np.sin(alphas)[:, None] * w[:, 1]
            state = np.concatenate(
                [np.broadcast_to(x0, dirs.shape), dirs, np.tile(np.eye(2).ravel(), (len(dirs), 1))],
                axis=1,
            )
            prev = 0.0
            for k, rk in enumerate(r):
                state = self._shoot(state, rk - prev)
                prev = rk
                y = state[:angular, 0:2]
                vel = state[:angular, 2:4]
                dya = (state[angular : 2 * angular, 0:2] - state[2 * angular :, 0:2]) / (2 * self.dalpha)
                g = self.metric(y)
                jac = np.abs(vel[:, 0] * dya[:, 1] - vel[:, 1] * dya[:, 0])
                out_J[p, k] = jac * np.sqrt(np.linalg.det(g))
                out_y[p, k] = y
                out_T[p, k] = state[:angular, 4:8].reshape(-1, 2, 2)
        W = (wr[:, None] * (2 * math.pi / angular)) * out_J
        R = np.broadcast_to((r / eps)[:, None], (radial, angular))
        n = len(pts)
        return (
            out_y.reshape(n, -1, 2),
            W.reshape(n, -1),
            np.broadcast_to(R.ravel(), (n, radial * angular)),
            out_T.reshape(n, -1, 2, 2),
        )

    def to_dict(self):
        return {"type": self.name, "inj": self.inj}


def sphere_ball_normalizer(eps):
    val, _ = quad(
        lambda r: math.exp(1.0 / ((r / eps) ** 2 - 1.0)) * math.sin(r) if r < eps else 0.0,
        0.0,
        eps,
        epsabs=1e-15,
        epsrel=1e-13,
        limit=200,
    )
    return 2 * math.pi * val
