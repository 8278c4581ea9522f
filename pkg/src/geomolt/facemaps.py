"""Face parametrizations: chart polygon -> embedding space, with analytic Jacobians.

A face map turns a chart point u = (s, t) into an embedded point X(u) in
R^2 or R^3.  The face metric is J^T J.  Maps whose target is the plane are
intrinsically flat.  Some maps also provide Fermi coordinates along one of
their sides (unit-speed normal coordinates), used to build edge charts.
"""

import math

import numpy as np

from .geometry import GeometryError


def _vec(p):
    return np.asarray(p, float)


class FaceMap:
    name = "base"
    planar = False
    flat = False  # intrinsically flat by construction

    def __init__(self, **params):
        self.params = params

    def embed(self, u):
        raise NotImplementedError

    def jac(self, u):
        raise NotImplementedError

    def metric(self, u):
        J = self.jac(np.asarray(u, float))
        return np.einsum("...ai,...aj->...ij", J, J)

    def inverse(self, X):
        raise GeometryError(f"{self.name} has no inverse map")

    @property
    def dim(self):
        return len(self.embed(np.zeros((1, 2)))[0])

    def fermi(self, side, corners, t, s):
        """Chart point at arclength t along ``side`` and normal distance s inward."""
        raise GeometryError(f"{self.name} has no Fermi coordinates along side {side}")

    def fermi_metric(self, side, corners, t, s):
        raise GeometryError(f"{self.name} has no Fermi coordinates along side {side}")


class AffineMap(FaceMap):
    name = "affine"
    flat = True

    def __init__(self, origin, basis):
        super().__init__(origin=list(map(float, origin)), basis=[list(map(float, b)) for b in basis])
        self.o = _vec(origin)
        self.B = _vec(basis).T  # (d, 2)
        self.planar = len(self.o) == 2

    def embed(self, u):
        return self.o + np.asarray(u, float) @ self.B.T

    def jac(self, u):
        u = np.asarray(u, float)
        return np.broadcast_to(self.B, u.shape[:-1] + self.B.shape).copy()

    def inverse(self, X):
        X = np.asarray(X, float) - self.o
        return np.linalg.lstsq(self.B, X.reshape(-1, len(self.o)).T, rcond=None)[0].T.reshape(X.shape[:-1] + (2,))

    def fermi(self, side, corners, t, s):
        a = np.asarray(corners[side], float)
        b = np.asarray(corners[(side + 1) % len(corners)], float)
        g = self.B.T @ self.B
        d = b - a
        d = d / math.sqrt(d @ g @ d)
        nrm = np.array([-d[1], d[0]])
        nrm = nrm - (nrm @ g @ d) * d
        nrm = nrm / math.sqrt(nrm @ g @ nrm)
        t = np.asarray(t, float)[..., None]
        s = np.asarray(s, float)[..., None]
        return a + t * d + s * nrm

    def fermi_metric(self, side, corners, t, s):
        t = np.asarray(t, float)
        out = np.zeros(t.shape + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        return out


class GnomonicMap(FaceMap):
    """Octant of the round sphere seen from the centre through the plane sum = 1."""

    name = "gnomonic"

    def __init__(self, signs, axes=(0, 1, 2), radius=1.0):
        super().__init__(signs=list(map(float, signs)), axes=list(map(int, axes)), radius=float(radius))
        self.S = _vec(signs)
        self.axes = tuple(int(a) for a in axes)
        self.R = float(radius)
        D = np.zeros((3, 2))
        D[self.axes[0], 0] = 1.0
        D[self.axes[1], 1] = 1.0
        D[self.axes[2], :] = -1.0
        self.dP = self.S[:, None] * D

    def _P(self, u):
        u = np.asarray(u, float)
        w = 1.0 - u[..., 0] - u[..., 1]
        comps = [None] * 3
        comps[self.axes[0]] = u[..., 0]
        comps[self.axes[1]] = u[..., 1]
        comps[self.axes[2]] = w
        return self.S * np.stack(comps, -1)

    def embed(self, u):
        P = self._P(u)
        return self.R * P / np.linalg.norm(P, axis=-1, keepdims=True)

    def jac(self, u):
        P = self._P(u)
        n = np.linalg.norm(P, axis=-1, keepdims=True)
        F = P / n
        proj = np.eye(3) - F[..., :, None] * F[..., None, :]
        return self.R * (proj @ self.dP) / n[..., None]

    def inverse(self, X):
        Y = self.S * np.asarray(X, float)
        tot = Y.sum(-1)
        return np.stack([Y[..., self.axes[0]] / tot, Y[..., self.axes[1]] / tot], -1)


class PolarSectorMap(FaceMap):
    """Flat circular sector; chart triangle (0,0) centre, (1,0), (0,1) on the rim."""

    name = "polar_sector"
    flat = True

    def __init__(self, center, e1, e2, radius, phi0, dphi):
        super().__init__(
            center=list(map(float, center)), e1=list(map(float, e1)), e2=list(map(float, e2)),
            radius=float(radius), phi0=float(phi0), dphi=float(dphi),
        )
        self.c, self.e1, self.e2 = _vec(center), _vec(e1), _vec(e2)
        self.R, self.phi0, self.dphi = float(radius), float(phi0), float(dphi)
        self.planar = True  # intrinsically a piece of the plane

    def _polar(self, u):
        u = np.asarray(u, float)
        s, t = u[..., 0], u[..., 1]
        q = s + t
        frac = np.divide(t, q, out=np.zeros_like(q), where=q != 0)
        return self.R * q, self.phi0 + self.dphi * frac, s, t, q

    def embed(self, u):
        r, th, *_ = self._polar(u)
        return self.c + r[..., None] * (np.cos(th)[..., None] * self.e1 + np.sin(th)[..., None] * self.e2)

    def jac(self, u):
        r, th, s, t, q = self._polar(u)
        er = np.cos(th)[..., None] * self.e1 + np.sin(th)[..., None] * self.e2
        et = -np.sin(th)[..., None] * self.e1 + np.cos(th)[..., None] * self.e2
        dth_ds = -self.dphi * t / q**2
        dth_dt = self.dphi * s / q**2
        col_s = self.R * er + (r * dth_ds)[..., None] * et
        col_t = self.R * er + (r * dth_dt)[..., None] * et
        return np.stack([col_s, col_t], -1)

    def fermi(self, side, corners, t, s):
        if side != 1:
            return super().fermi(side, corners, t, s)
        # rim side from (1,0) to (0,1); t arclength, s inward distance
        t = np.asarray(t, float)
        s = np.asarray(s, float)
        q = (self.R - s) / self.R
        tau = t / (self.R * self.dphi)
        return np.stack([q * (1 - tau), q * tau], -1)

    def fermi_metric(self, side, corners, t, s):
        if side != 1:
            return super().fermi_metric(side, corners, t, s)
        s = np.asarray(s, float) + 0 * np.asarray(t, float)
        out = np.zeros(s.shape + (2, 2))
        out[..., 0, 0] = ((self.R - s) / self.R) ** 2
        out[..., 1, 1] = 1.0
        return out


class AnnulusSectorMap(FaceMap):
    """Flat annular sector; chart square, s radial from r0 to r1, t angular."""

    name = "annulus_sector"
    flat = True

    def __init__(self, center, e1, e2, r0, r1, phi0, dphi):
        super().__init__(
            center=list(map(float, center)), e1=list(map(float, e1)), e2=list(map(float, e2)),
            r0=float(r0), r1=float(r1), phi0=float(phi0), dphi=float(dphi),
        )
        self.c, self.e1, self.e2 = _vec(center), _vec(e1), _vec(e2)
        self.r0, self.r1, self.phi0, self.dphi = float(r0), float(r1), float(phi0), float(dphi)
        self.planar = True

    def embed(self, u):
        u = np.asarray(u, float)
        r = self.r0 + u[..., 0] * (self.r1 - self.r0)
        th = self.phi0 + self.dphi * u[..., 1]
        return self.c + r[..., None] * (np.cos(th)[..., None] * self.e1 + np.sin(th)[..., None] * self.e2)

    def jac(self, u):
        u = np.asarray(u, float)
        r = self.r0 + u[..., 0] * (self.r1 - self.r0)
        th = self.phi0 + self.dphi * u[..., 1]
        er = np.cos(th)[..., None] * self.e1 + np.sin(th)[..., None] * self.e2
        et = -np.sin(th)[..., None] * self.e1 + np.cos(th)[..., None] * self.e2
        return np.stack([(self.r1 - self.r0) * er, (r * self.dphi)[..., None] * et], -1)


class CylinderMap(FaceMap):
    """Band of the cylinder of given radius around the z axis; chart unit square."""

    name = "cylinder"
    flat = True

    def __init__(self, radius, phi0, dphi, z0, height):
        super().__init__(radius=float(radius), phi0=float(phi0), dphi=float(dphi), z0=float(z0), height=float(height))
        self.R, self.phi0, self.dphi, self.z0, self.h = map(float, (radius, phi0, dphi, z0, height))

    def embed(self, u):
        u = np.asarray(u, float)
        ph = self.phi0 + self.dphi * u[..., 0]
        return np.stack([self.R * np.cos(ph), self.R * np.sin(ph), self.z0 + self.h * u[..., 1]], -1)

    def jac(self, u):
        u = np.asarray(u, float)
        ph = self.phi0 + self.dphi * u[..., 0]
        zero = 0 * ph
        cs = np.stack([-self.R * self.dphi * np.sin(ph), self.R * self.dphi * np.cos(ph), zero], -1)
        ct = np.stack([zero, zero, zero + self.h], -1)
        return np.stack([cs, ct], -1)

    def fermi(self, side, corners, t, s):
        t = np.asarray(t, float)
        s = np.asarray(s, float)
        L = self.R * self.dphi
        if side == 0:  # bottom, from (0,0) to (1,0)
            return np.stack([t / L, s / self.h], -1)
        if side == 2:  # top, from (1,1) to (0,1)
            return np.stack([1 - t / L, 1 - s / self.h], -1)
        return super().fermi(side, corners, t, s)

    def fermi_metric(self, side, corners, t, s):
        if side not in (0, 2):
            return super().fermi_metric(side, corners, t, s)
        s = np.asarray(s, float) + 0 * np.asarray(t, float)
        out = np.zeros(s.shape + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = 1.0
        return out


FACE_MAPS = {
    cls.name: cls for cls in (AffineMap, GnomonicMap, PolarSectorMap, AnnulusSectorMap, CylinderMap)
}


def make_face_map(name, params):
    if name not in FACE_MAPS:
        raise GeometryError(f"unknown face map {name}; known: {sorted(FACE_MAPS)}")
    return FACE_MAPS[name](**params)
