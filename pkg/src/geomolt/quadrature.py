"""Gauss-Legendre helpers shared by the smoothing, norm and measure code."""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def gauss_legendre(n):
    """Nodes and weights on [-1, 1] (cached, read-only arrays)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_interval(a, b, n):
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gl(breaks, n):
    """Composite rule over consecutive panels given by sorted ``breaks``."""
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            x, w = gl_interval(a, b, n)
            xs.append(x)
            ws.append(w)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ws)


def box_grid(lo, hi, n):
    """Tensor-product GL nodes on an axis-aligned box.

    Returns points of shape (N, d) and weights (N,).
    """
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    axes = [gl_interval(a, b, n) for a, b in zip(lo, hi)]
    return _tensor(axes)


def tensor_composite(breaks_per_axis, n):
    axes = [composite_gl(np.asarray(b, float), n) for b in breaks_per_axis]
    return _tensor(axes)


def _tensor(axes):
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, w


def polar_composite(center, radial_breaks, angular_breaks, n_r, n_a):
    """Composite GL in polar coordinates around ``center`` (2D).

    Weights include the Jacobian r.
    """
    r, wr = composite_gl(np.asarray(radial_breaks, float), n_r)
    a, wa = composite_gl(np.asarray(angular_breaks, float), n_a)
    R, A = np.meshgrid(r, a, indexing="ij")
    WR, WA = np.meshgrid(wr, wa, indexing="ij")
    c = np.asarray(center, float)
    pts = np.stack([c[0] + R * np.cos(A), c[1] + R * np.sin(A)], axis=-1).reshape(-1, 2)
    return pts, (WR * WA * R).ravel()


def triangle_rule(n):
    """Collapsed (Duffy) GL rule on the reference triangle (0,0),(1,0),(0,1)."""
    x, w = gl_interval(0.0, 1.0, n)
    U, V = np.meshgrid(x, x, indexing="ij")
    WU, WV = np.meshgrid(w, w, indexing="ij")
    u = U.ravel()
    v = (V * (1.0 - U)).ravel()
    return np.stack([u, v], axis=-1), (WU * WV * (1.0 - U)).ravel()
