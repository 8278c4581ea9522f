# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the polygon mollification jets and ternary digits."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, atan2, fabs, M_PI

cnp.import_array()

from ._pykernels import MOLLIFIER_C2 as _C2, _xe, _we, _xh01, _wh01, _G_MINUS_ONE as _GM1

cdef double C2 = _C2
cdef double GM1 = _GM1
cdef int QE = len(_xe)
cdef int QH = len(_xh01)
cdef double[::1] XE = np.ascontiguousarray(_xe)
cdef double[::1] WE = np.ascontiguousarray(_we)
cdef double[::1] XH = np.ascontiguousarray(_xh01)
cdef double[::1] WH = np.ascontiguousarray(_wh01)


cdef inline double e1_cf(double z) nogil:
    # E1(z) for z >= 1 by Lentz continued fraction
    cdef double b = z + 1.0, c = 1e300, d = 1.0 / b, h = d, an, delta
    cdef int i
    for i in range(1, 200):
        an = -i * i
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if fabs(delta - 1.0) < 1e-16:
            break
    return h * exp(-z)


cdef inline double radial_h(double u2) nogil:
    cdef double s = 0.0, w
    cdef int k
    if u2 < 0.25:
        for k in range(QH):
            s += WH[k] * exp(1.0 / (u2 * XH[k] - 1.0))
        return s
    w = 1.0 / (u2 - 1.0)
    return (exp(w) / w + e1_cf(-w) - GM1) / u2


def polygon_jets(points, verts, double eps, int order=2):
    cdef double[:, ::1] x = np.ascontiguousarray(np.asarray(points, float).reshape(-1, 2))
    cdef double[:, ::1] v = np.ascontiguousarray(np.asarray(verts, float))
    cdef Py_ssize_t N = x.shape[0], E = v.shape[0], p, e, k
    out_v = np.zeros(N)
    out_g = np.zeros((N, 2))
    out_h = np.zeros((N, 2, 2))
    cdef double[::1] val = out_v
    cdef double[:, ::1] gr = out_g
    cdef double[:, :, ::1] he = out_h
    cdef double ax, ay, bx, by, ex, ey, L, tx, ty, nx, ny, d, s1, s2, w, lo, hi
    cdef double eps2 = eps * eps, ang, mid, half, sig, wq, u2, q, eta, hsum, esum, f0, f1
    cdef double zx, zy
    with nogil:
        for p in range(N):
            ang = 0.0
            for e in range(E):
                ax = v[e, 0]; ay = v[e, 1]
                bx = v[(e + 1) % E, 0]; by = v[(e + 1) % E, 1]
                ex = bx - ax; ey = by - ay
                L = sqrt(ex * ex + ey * ey)
                if L == 0.0:
                    continue
                tx = ex / L; ty = ey / L
                nx = ty; ny = -tx
                ax = ax - x[p, 0]; ay = ay - x[p, 1]
                d = ax * nx + ay * ny
                s1 = ax * tx + ay * ty
                s2 = s1 + L
                if fabs(d) < eps:
                    w = sqrt(eps2 - d * d)
                    lo = min(max(-w, s1), s2)
                    hi = min(max(w, s1), s2)
                else:
                    lo = s2; hi = s2
                ang += atan2(d * (lo - s1), d * d + s1 * lo) + atan2(d * (s2 - hi), d * d + hi * s2)
                half = 0.5 * (hi - lo)
                if half <= 0.0:
                    continue
                mid = 0.5 * (hi + lo)
                hsum = 0.0; esum = 0.0; f0 = 0.0; f1 = 0.0
                for k in range(QE):
                    sig = mid + half * XE[k]
                    wq = half * WE[k]
                    u2 = (d * d + sig * sig) / eps2
                    if u2 >= 1.0:
                        hsum += wq * (-GM1)  # rim limit of the radial mean
                        continue
                    hsum += wq * radial_h(u2)
                    if order >= 1:
                        q = u2 - 1.0
                        eta = C2 / eps2 * exp(1.0 / q)
                        esum += wq * eta
                        if order >= 2:
                            f0 += wq * eta * 2.0 / (eps2 * q * q)
                            f1 += wq * eta * 2.0 / (eps2 * q * q) * sig
                val[p] += d * C2 / (2.0 * eps2) * hsum
                if order >= 1:
                    gr[p, 0] -= nx * esum
                    gr[p, 1] -= ny * esum
                if order >= 2:
                    zx = d * nx * f0 + tx * f1
                    zy = d * ny * f0 + ty * f1
                    he[p, 0, 0] -= nx * zx
                    he[p, 0, 1] -= nx * zy
                    he[p, 1, 0] -= ny * zx
                    he[p, 1, 1] -= ny * zy
            val[p] += ang / (2.0 * M_PI)
            f0 = 0.5 * (he[p, 0, 1] + he[p, 1, 0])
            he[p, 0, 1] = f0
            he[p, 1, 0] = f0
    return (
        out_v,
        out_g if order >= 1 else None,
        out_h if order >= 2 else None,
    )


def ternary_digits(x, int ndigits=60):
    cdef double[::1] xs = np.ascontiguousarray(np.asarray(x, float).ravel())
    cdef Py_ssize_t N = xs.shape[0], p
    cdef int i
    out = np.empty((N, ndigits), np.int8)
    cdef cnp.int8_t[:, ::1] o = out
    cdef long long rem, t
    cdef long long mask = (1LL << 60) - 1
    with nogil:
        for p in range(N):
            if xs[p] >= 1.0:
                for i in range(ndigits):
                    o[p, i] = 2
                continue
            rem = <long long>(xs[p] * 1152921504606846976.0)
            for i in range(ndigits):
                t = rem * 3
                o[p, i] = <cnp.int8_t>(t >> 60)
                rem = t & mask
    return out


def cantor_values(x, int ndigits=60):
    cdef double[::1] xs = np.ascontiguousarray(np.asarray(x, float).ravel())
    cdef Py_ssize_t N = xs.shape[0], p
    cdef int i, dg
    out = np.empty(N)
    cdef double[::1] o = out
    cdef long long rem, t
    cdef long long mask = (1LL << 60) - 1
    cdef double acc, wgt
    with nogil:
        for p in range(N):
            if xs[p] >= 1.0:
                o[p] = 1.0
                continue
            rem = <long long>(xs[p] * 1152921504606846976.0)
            acc = 0.0
            wgt = 0.5
            for i in range(ndigits):
                t = rem * 3
                dg = <int>(t >> 60)
                rem = t & mask
                if dg == 1:
                    acc += wgt
                    break
                if dg == 2:
                    acc += wgt
                wgt *= 0.5
            o[p] = acc
    return out
