"""Numpy implementations of the hot kernels (fallback backend)."""

import math

import numpy as np
from scipy.special import exp1

# 1 / integral over the unit disk of exp(1/(r^2-1))
MOLLIFIER_C2 = 1.0 / (math.pi * (math.exp(-1.0) - float(exp1(1.0))))
_G_MINUS_ONE = -math.exp(-1.0) + float(exp1(1.0))

_EDGE_NODES = 40
_H_NODES = 12
_xe, _we = np.polynomial.legendre.leggauss(_EDGE_NODES)
_xh, _wh = np.polynomial.legendre.leggauss(_H_NODES)
_xh01 = 0.5 * (_xh + 1.0)
_wh01 = 0.5 * _wh


def radial_h(u2):
    """Mean of exp(1/(v-1)) over v in [0, u2], for 0 <= u2 < 1."""
    u2 = np.asarray(u2, float)
    out = np.empty_like(u2)
    small = u2 < 0.25
    us = u2[small]
    out[small] = np.exp(1.0 / (us[..., None] * _xh01 - 1.0)) @ _wh01
    ub = np.minimum(u2[~small], 1.0)
    rim = ub >= 1.0
    w = 1.0 / np.where(rim, -1.0, ub - 1.0)
    mid = (np.exp(w) / w + exp1(-w) - _G_MINUS_ONE) / ub
    out[~small] = np.where(rim, -_G_MINUS_ONE, mid)  # limit value on the kernel's rim
    return out


def polygon_jets(points, verts, eps, order=2):
    """Indicator of a CCW polygon convolved with the 2D standard mollifier.

    Returns (value (N,), gradient (N,2) or None, hessian (N,2,2) or None).
    """
    x = np.asarray(points, float).reshape(-1, 2)
    v = np.asarray(verts, float)
    a = v
    b = np.roll(v, -1, axis=0)
    e = b - a
    L = np.hypot(e[:, 0], e[:, 1])
    keep = L > 0
    a, b, e, L = a[keep], b[keep], e[keep], L[keep]
    t = e / L[:, None]
    n = np.stack([t[:, 1], -t[:, 0]], axis=1)  # outward for CCW

    ax = a[None, :, :] - x[:, None, :]  # (N, E, 2)
    d = np.einsum("pec,ec->pe", ax, n)
    s1 = np.einsum("pec,ec->pe", ax, t)
    s2 = s1 + L[None, :]

    eps2 = eps * eps
    inside = np.abs(d) < eps
    w = np.sqrt(np.where(inside, eps2 - d * d, 0.0))
    lo = np.where(inside, np.clip(-w, s1, s2), s2)
    hi = np.where(inside, np.clip(w, s1, s2), s2)
    # far parts: [s1, lo] and [hi, s2]
    ang = np.arctan2(d * (lo - s1), d * d + s1 * lo) + np.arctan2(
        d * (s2 - hi), d * d + hi * s2
    )
    value = ang.sum(axis=1) / (2.0 * math.pi)

    half = 0.5 * (hi - lo)
    active = inside & (half > 0)
    grad = hess = None
    if order >= 1:
        grad = np.zeros((len(x), 2))
    if order >= 2:
        hess = np.zeros((len(x), 2, 2))
    if np.any(active):
        pi, ei = np.nonzero(active)
        dd = d[pi, ei]
        mid = 0.5 * (hi + lo)[pi, ei]
        hh = half[pi, ei]
        sig = mid[:, None] + hh[:, None] * _xe[None, :]  # (M, q)
        wq = hh[:, None] * _we[None, :]
        u2 = np.minimum((dd[:, None] ** 2 + sig**2) / eps2, 1.0)
        hval = radial_h(u2.ravel()).reshape(u2.shape)
        contrib = dd * (MOLLIFIER_C2 / (2.0 * eps2)) * np.sum(hval * wq, axis=1)
        np.add.at(value, pi, contrib)
        if order >= 1:
            q = np.where(u2 < 1.0, u2 - 1.0, -1.0)
            eta = np.where(u2 < 1.0, (MOLLIFIER_C2 / eps2) * np.exp(1.0 / q), 0.0)
            ne = n[ei]
            ieta = np.sum(eta * wq, axis=1)
            np.add.at(grad, pi, -ne * ieta[:, None])
            if order >= 2:
                # z = d n + sigma t ; d_xj eta(y - x) = eta * 2 z_j / (eps^2 q^2)
                fac = eta * 2.0 / (eps2 * q * q) * wq
                i0 = np.sum(fac, axis=1)
                i1 = np.sum(fac * sig, axis=1)
                te = t[ei]
                zint = dd[:, None] * ne * i0[:, None] + te * i1[:, None]
                np.add.at(hess, pi, -ne[:, :, None] * zint[:, None, :])
    if hess is not None:
        hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    return value, grad, hess


def ternary_digits(x, ndigits=60):
    """First ``ndigits`` base-3 digits of x in [0, 1] using 2**60 scaled integers."""
    x = np.asarray(x, float).ravel()
    scale = 1 << 60
    mask = scale - 1
    one = x >= 1.0
    rem = np.floor(np.where(one, 0.0, x) * float(scale)).astype(np.int64)
    out = np.empty((len(x), ndigits), np.int8)
    for i in range(ndigits):
        t = rem * 3
        out[:, i] = t >> 60
        rem = t & mask
    out[one] = 2
    return out


def cantor_from_digits(digits):
    digits = np.asarray(digits)
    m = digits.shape[-1]
    is_one = digits == 1
    has_one = is_one.any(axis=-1)
    first = np.where(has_one, np.argmax(is_one, axis=-1), m)
    idx = np.arange(m)
    weights = 0.5 ** (idx + 1)
    halves = np.where(idx[None, :] < first[:, None], digits // 2, 0)
    val = halves @ weights
    return val + np.where(has_one, 0.5 ** (first + 1), 0.0)


def cantor_values(x, ndigits=60):
    return cantor_from_digits(ternary_digits(x, ndigits))
