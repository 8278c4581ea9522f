"""Connection, curvature, frames and Lipschitz-Killing densities from metric jets.

Index conventions:
  dg[..., i, j, k]      = d_k g_ij
  ddg[..., i, j, k, l]  = d_k d_l g_ij
  gamma[..., k, i, j]   = Gamma^k_ij
  R[..., l, k, i, j]    = R^l_kij, where R(d_i, d_j) d_k = R^l_kij d_l
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .geometry import FrameField, GeometryError, fd_jet
from .quadrature import box_grid

COND_LIMIT = 1e12


class SingularMetricError(GeometryError):
    def __init__(self, cond, point=None):
        self.cond = cond
        self.point = point
        super().__init__(f"metric singular or ill-conditioned (condition number {cond:.3g})")


def metric_jet(metric, x, order=2):
    """(g, dg, ddg) of any metric evaluator; closed-form callables get FD jets."""
    x = np.asarray(x, float)
    if hasattr(metric, "jet"):
        return metric.jet(x, order)
    return fd_jet(lambda p: np.asarray(metric(p), float), x, order)


def checked_inverse(g, points=None):
    cond = np.linalg.cond(g)
    bad = ~np.isfinite(cond) | (cond > COND_LIMIT)
    if np.any(bad):
        idx = np.argmax(np.where(np.isfinite(cond), cond, np.inf))
        where = None if points is None else np.asarray(points).reshape(-1, g.shape[-1])[idx]
        raise SingularMetricError(float(np.ravel(cond)[idx]), where)
    return np.linalg.inv(g)


def christoffel_from_jet(g, dg, ginv=None):
    if ginv is None:
        ginv = checked_inverse(g)
    low = 0.5 * (
        np.einsum("...jmi->...mij", dg)
        + np.einsum("...mij->...mij", dg)
        - np.einsum("...ijm->...mij", dg)
    )
    return np.einsum("...km,...mij->...kij", ginv, low)


def riemann_from_jet(g, dg, ddg, ginv=None):
    if ginv is None:
        ginv = checked_inverse(g)
    low = 0.5 * (
        np.einsum("...jmi->...mij", dg)
        + np.einsum("...mij->...mij", dg)
        - np.einsum("...ijm->...mij", dg)
    )
    gam = np.einsum("...km,...mij->...kij", ginv, low)
    # d_l of the lowered symbols and of the inverse metric
    dlow = 0.5 * (
        np.einsum("...jmil->...mijl", ddg)
        + np.einsum("...mijl->...mijl", ddg)
        - np.einsum("...ijml->...mijl", ddg)
    )
    dginv = -np.einsum("...ka,...abl,...bm->...kml", ginv, dg, ginv)
    dgam = np.einsum("...kml,...mij->...kijl", dginv, low) + np.einsum(
        "...km,...mijl->...kijl", ginv, dlow
    )
    # R^l_kij = d_i G^l_jk - d_j G^l_ik + G^m_jk G^l_im - G^m_ik G^l_jm
    r = (
        np.einsum("...ljki->...lkij", dgam)
        - np.einsum("...likj->...lkij", dgam)
        + np.einsum("...mjk,...lim->...lkij", gam, gam)
        - np.einsum("...mik,...ljm->...lkij", gam, gam)
    )
    return gam, r


@dataclass(frozen=True)
class ConnectionAt:
    point: np.ndarray
    gamma: np.ndarray


@dataclass(frozen=True)
class CurvatureAt:
    point: np.ndarray
    R: np.ndarray
    metric: np.ndarray

    @property
    def ricci(self):
        return np.einsum("...ibia->...ab", self.R)

    @property
    def scalar(self):
        ginv = np.linalg.inv(self.metric)
        return np.einsum("...ab,...ab->...", ginv, self.ricci)

    @property
    def gaussian(self):
        if self.metric.shape[-1] != 2:
            raise GeometryError("Gaussian curvature is defined for n = 2")
        return 0.5 * self.scalar


def christoffel(metric, x):
    x = np.asarray(x, float)
    g, dg, _ = metric_jet(metric, x, order=1)
    return ConnectionAt(x, christoffel_from_jet(g, dg, checked_inverse(g, x)))


def curvature(metric, x):
    x = np.asarray(x, float)
    g, dg, ddg = metric_jet(metric, x, order=2)
    _, r = riemann_from_jet(g, dg, ddg, checked_inverse(g, x))
    return CurvatureAt(x, r, g)


def gaussian_curvature(metric, x):
    return curvature(metric, x).gaussian


def orthonormalize(metric, frame, x):
    """Gram-Schmidt of the columns of ``frame`` with respect to metric(x)."""
    x = np.asarray(x, float)
    g = np.asarray(metric(x[None])[0] if callable(metric) else metric, float)
    f = np.asarray(frame, float)
    n = f.shape[0]
    if abs(np.linalg.det(f)) < 1e-14:
        raise GeometryError("degenerate input frame")
    out = np.zeros_like(f)
    for i in range(n):
        v = f[:, i].copy()
        for _ in range(2):
            for j in range(i):
                v -= (out[:, j] @ g @ v) * out[:, j]
        nv = math.sqrt(v @ g @ v)
        if nv < 1e-14:
            raise GeometryError("degenerate input frame")
        out[:, i] = v / nv
    return out


def orthonormal_frame_field(metric, chart, points, raw=None):
    points = np.asarray(points, float)
    n = points.shape[-1]
    raw = np.eye(n) if raw is None else raw
    frames = np.stack([orthonormalize(metric, raw, p) for p in points])
    return FrameField(chart, points, frames, orthonormal_wrt=metric)


def _perm_sign(p):
    p = list(p)
    s = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            s = -s
    return s


def _lk_tables(n, kappa):
    perms = list(itertools.permutations(range(n)))
    signs = [_perm_sign(p) for p in perms]
    return perms, signs


def lk_coefficient(n, kappa):
    return (-1) ** (kappa // 2) / (
        math.factorial(n - kappa) * 2**kappa * math.pi ** (kappa / 2) * math.factorial(kappa // 2)
    )


def lk_density_from_forms(omega, n, kappa):
    """Density of the LK form on an orthonormal frame.

    ``omega[..., l, k, i, j]`` = Omega_lk(w_i, w_j).  Returns R^kappa(w_1..w_n).
    """
    perms, signs = _lk_tables(n, kappa)
    half = kappa // 2
    total = 0.0
    for sigma, s_sigma in zip(perms, signs):
        for tau, s_tau in zip(perms, signs):
            if any(sigma[b] != tau[b] for b in range(kappa, n)):
                continue
            term = s_sigma * s_tau
            prod = 1.0
            for a in range(half):
                prod = prod * omega[..., sigma[2 * a], sigma[2 * a + 1], tau[2 * a], tau[2 * a + 1]]
            total = total + term * prod
    return lk_coefficient(n, kappa) * total / 2**half


def lk_density(metric, kappa, x, frame=None):
    """LK form evaluated on a positively oriented orthonormal frame at x.

    Multiply by the Riemannian volume element to integrate.
    """
    x = np.asarray(x, float)
    n = x.shape[-1]
    if not (0 <= kappa <= n) or int(kappa) != kappa:
        raise GeometryError(f"kappa must be an integer in [0, {n}]")
    if n > 4:
        raise GeometryError("LK densities are implemented for n <= 4")
    if kappa % 2 == 1:
        return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
    single = x.ndim == 1
    pts = x.reshape(-1, n)
    if kappa == 0:
        val = lk_density_from_forms(np.zeros((len(pts), n, n, n, n)), n, 0)
        val = np.broadcast_to(val, (len(pts),)).astype(float)
        return float(val[0]) if single else val.reshape(x.shape[:-1])
    curv = curvature(metric, pts)
    g = curv.metric
    out = np.empty(len(pts))
    for p in range(len(pts)):
        raw = np.eye(n) if frame is None else np.asarray(frame, float)
        w = orthonormalize(g[p], raw, pts[p])
        if np.linalg.det(w) < 0:
            w[:, -1] *= -1
        # Omega_lk(w_i, w_j) = g(R(w_i, w_j) w_k, w_l)
        rw = np.einsum("bcij,ck,iI,jJ->bkIJ", curv.R[p], w, w, w)
        omega = np.einsum("al,ab,bkIJ->lkIJ", w, g[p], rw)
        out[p] = lk_density_from_forms(omega, n, kappa)
    return float(out[0]) if single else out.reshape(x.shape[:-1])


def lk_measure(metric, region, kappa, n_nodes=33):
    """Integral of the LK form over a chart box (tensor Gauss-Legendre)."""
    lo, hi = (region.lo, region.hi) if hasattr(region, "lo") else region
    n = len(lo)
    if not (0 <= kappa <= n):
        raise GeometryError(f"kappa must be an integer in [0, {n}]")
    if kappa % 2 == 1:
        return 0.0
    chart = getattr(metric, "chart", None)
    if chart is not None:
        from .geometry import Box

        if not chart.domain.contains_box(Box(tuple(lo), tuple(hi))):
            raise GeometryError("region is not inside the chart domain")
    pts, w = box_grid(lo, hi, n_nodes)
    g = np.asarray(metric(pts), float)
    vol = np.sqrt(np.linalg.det(g))
    dens = lk_density(metric, kappa, pts)
    return float(np.sum(w * vol * dens))


def integrate_gaussian(metric, region, n_nodes=33):
    lo, hi = (region.lo, region.hi) if hasattr(region, "lo") else region
    pts, w = box_grid(lo, hi, n_nodes)
    curv = curvature(metric, pts)
    vol = np.sqrt(np.linalg.det(curv.metric))
    return float(np.sum(w * vol * curv.gaussian))


def c2_convergence_check(ghat, P, epsilon_sequence, probes):
    """Connection and curvature errors of the covering smoothings at probe points.

    One row per epsilon with the max component errors of Gamma and R and the
    max Gaussian-curvature error (n = 2) against the unsmoothed metric.
    """
    from .mollifier import smooth_wrt_P

    eps_list = [float(e) for e in epsilon_sequence]
    if not eps_list:
        raise GeometryError("empty epsilon sequence")
    x = np.asarray(probes, float)
    g, dg, ddg = metric_jet(ghat, x, 2)
    gam_ref, r_ref = riemann_from_jet(g, dg, ddg, checked_inverse(g, x))
    k_ref = CurvatureAt(x, r_ref, g).gaussian if x.shape[-1] == 2 else None
    rows = []
    for eps in eps_list:
        S = smooth_wrt_P(ghat, P, eps)
        gs, dgs, ddgs = S.jet(x, 2)
        gam, r = riemann_from_jet(gs, dgs, ddgs, checked_inverse(gs, x))
        row = {
            "eps": eps,
            "gamma_err": float(np.max(np.abs(gam - gam_ref))),
            "riemann_err": float(np.max(np.abs(r - r_ref))),
        }
        if k_ref is not None:
            row["gaussian_err"] = float(np.max(np.abs(CurvatureAt(x, r, gs).gaussian - k_ref)))
        rows.append(row)
    return rows
