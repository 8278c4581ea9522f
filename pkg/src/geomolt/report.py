"""Study runner: one configuration in, report.json plus CSV tables out.

A configuration is a mapping with keys ``study``, ``example``, ``params``,
``eps``, ``grid``, ``options`` and ``tolerance``.  The ``suite`` study holds
a list of such mappings under ``studies``.
"""

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .examples import REGISTRY, build_example
from .geometry import Box, GeometryError, build_covering, export_grid_csv

STUDIES = ("smooth", "curvature", "transport", "distance", "measure", "cantor", "suite")
SWEEPING = {"smooth", "curvature", "transport", "distance"}


def load_config(path):
    with open(path) as fh:
        cfg = yaml.safe_load(fh) or {}
    if not isinstance(cfg, dict):
        raise GeometryError("configuration must be a mapping")
    return cfg


def _eps(cfg):
    eps = cfg.get("eps")
    if eps is None:
        return None
    eps = [float(e) for e in eps]
    if not eps:
        raise GeometryError("empty epsilon list")
    if any(e <= 0 for e in eps):
        raise GeometryError("epsilon values must be positive")
    return eps


def _covering(opts, domain):
    c = dict(opts.get("covering") or {})
    return build_covering(
        Box(*domain), c.get("cell_size", 0.5), c.get("overlap", 0.1), c.get("skew", 0.0), c.get("margin", 0.2)
    )


# ---------------------------------------------------------------------------
# studies


def _study_smooth(cfg, eps):
    from .mollifier import convergence_report

    from .mollifier import smooth_wrt_background, smooth_wrt_P

    T = build_example(cfg["example"], cfg.get("params"))
    opts = cfg.get("options") or {}
    region = Box(*opts.get("region", ((-0.5, -0.5), (0.5, 0.5))))
    n = cfg.get("grid", 33)
    smoother = opts.get("smoother", "background")
    if smoother not in ("background", "covering"):
        raise GeometryError(f"smoothing mode must be background or covering, not {smoother!r}")
    P = _covering(opts, opts.get("covering_domain", (region.lo, region.hi))) if smoother == "covering" else None
    kw = {"smoother": smoother, "covering": P, "n": n}
    rep = convergence_report(T, opts.get("norm", "C0LOC"), eps, region, p=opts.get("p", 2), **kw)
    errs = [float(e) for e in rep["errors"]]
    out = {"values": errs, "residuals": errs, "verdict": "MONOTONE" if rep["monotone"] else "NONMONOTONE"}
    out["field"], out["mode"] = cfg["example"], smoother
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out["c0_err"] = convergence_report(T, "C0LOC", eps, region, **kw)["errors"]
        out["lp_err"] = convergence_report(T, "LPLOC", eps, region, p=opts.get("p", 2), **kw)["errors"]
    # smoothed components at the finest epsilon on a coarse grid
    S = smooth_wrt_P(T, P, eps[-1]) if P is not None else smooth_wrt_background(T, region, eps[-1])
    m = min(int(n), 17)
    axes = [np.linspace(lo, hi, m) for lo, hi in zip(region.lo, region.hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, region.dim)
    d = region.dim
    names = [f"g{i}{j}" for i in range(d) for j in range(d) if i <= j]
    iu = np.triu_indices(d)
    vals = np.asarray(S(pts), float)[:, iu[0], iu[1]]
    out["_grids"] = {"smoothed_grid": (pts, vals, names)}
    return out


def _surface_region(surface, where):
    from . import surface as surf

    if "vertex" in where:
        return surf.vertex_region(surface, where["vertex"], where.get("radius", 0.3))
    if "edge" in where:
        L = surf.edge_length(surface, where["edge"])
        return surf.edge_region(
            surface, where["edge"], where.get("t0", 0.3) * L, where.get("t1", 0.7) * L, where.get("half_width", 0.3)
        )
    if "face" in where:
        return surf.face_region(surface, where["face"], where["center"], where.get("radius", 0.15))
    raise GeometryError("curvature region needs one of vertex, edge, face")


def _study_curvature(cfg, eps):
    from .surface import PiecewiseSurface, measure_smoothing_convergence

    obj = build_example(cfg["example"], cfg.get("params"))
    opts = cfg.get("options") or {}
    if isinstance(obj, PiecewiseSurface):
        region = _surface_region(obj, opts.get("region") or {"vertex": next(iter(obj.vertices))})
        rows = measure_smoothing_convergence(obj, region, eps, covering=opts.get("covering"))
        vals = [r["value"] for r in rows]
        res = [r["error"] for r in rows]
        return {"values": vals, "residuals": res, "verdict": _trend(res), "target": rows[0]["target"]}
    from .riemann import c2_convergence_check

    region = Box(*opts.get("region", ((-0.3, -0.3), (0.3, 0.3))))
    n = int(cfg.get("grid", 5))
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(region.lo, region.hi)]
    probes = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2)
    P = _covering(opts, opts.get("covering_domain", (region.lo, region.hi)))
    rows = c2_convergence_check(obj, P, eps, probes)
    res = [r["gaussian_err"] for r in rows]
    out = {
        "values": res,
        "residuals": res,
        "verdict": _trend(res),
        "gamma_err": [r["gamma_err"] for r in rows],
        "riemann_err": [r["riemann_err"] for r in rows],
    }
    if opts.get("kappa") is not None:
        from .mollifier import smooth_wrt_P
        from .riemann import lk_measure

        k = int(opts["kappa"])
        out["kappa"] = k
        out["lk_measure"] = [lk_measure(smooth_wrt_P(obj, P, e), (region.lo, region.hi), k, n_nodes=17) for e in eps]
    return out


def _study_transport(cfg, eps):
    from .transport import edge_angle_drift

    T = build_example(cfg["example"], cfg.get("params"))
    opts = cfg.get("options") or {}
    P = _covering(opts, opts.get("covering_domain", ((-1.0, -1.0), (1.0, 1.0))))
    vals = []
    for e in eps:
        d = edge_angle_drift(
            T, P, opts.get("edge_point", (0.0, 0.0)), opts.get("edge_dir", (1.0, 0.0)),
            opts.get("crossing_dir", (0.3, 0.8)), opts.get("v0", (1.0, 0.5)), e,
        )
        vals.append(d.drift)
    return {"values": vals, "residuals": vals, "verdict": _trend(vals)}


def _study_distance(cfg, eps):
    from .transport import nonregular_distance

    T = build_example(cfg["example"], cfg.get("params"))
    opts = cfg.get("options") or {}
    P = _covering(opts, opts.get("covering_domain", ((-0.7, -0.7), (0.7, 0.7))))
    est = nonregular_distance(
        T, P, opts.get("x", (0.0, -0.5)), opts.get("y", (0.0, 0.5)), eps,
        grid_n=int(cfg.get("grid", 17)), path=opts.get("path", "geodesic"),
    )
    out = {"values": [float(d) for d in est.distances], "verdict": est.verdict}
    out["residuals"] = [abs(d - est.distances[-1]) for d in est.distances]
    out["limit"] = est.value
    out["liminf"], out["limsup"] = est.liminf, est.limsup
    return out


def _study_measure(cfg, eps):
    from .surface import Region, gauss_bonnet_closed, measure_on_open

    S = build_example(cfg["example"], cfg.get("params"))
    opts = cfg.get("options") or {}
    sets = opts.get("sets") or (["all()"] if not opts.get("set") else [opts["set"]])
    vals, rows = [], []
    for text in sets:
        m = measure_on_open(S, Region.parse(text))
        vals.append(m.total)
        rows.append({"set": text, "plus": m.plus, "minus": m.minus, "total": m.total})
    out = {"values": vals, "residuals": [], "verdict": "EVALUATED", "sets": rows}
    if S.closed:
        total, res = gauss_bonnet_closed(S)
        out["gauss_bonnet_total"], out["residuals"] = total, [abs(res)]
    return out


def _study_cantor(cfg, eps):
    from .cantor import cantor_curve, cantor_sphere, curvature_dimension

    opts = cfg.get("options") or {}
    C = cantor_curve(int(opts.get("N", 2**20)))
    p = float(opts.get("point", 0.1875))
    slope = curvature_dimension(C, p).slope
    S = cantor_sphere(curve=C)
    eps = eps or [1e-3, 3e-4, 1e-4]
    totals = [S.total_curvature(e) for e in eps]
    return {
        "values": [t / (4 * math.pi) for t in totals],
        "residuals": [abs(t / (4 * math.pi) - 1) for t in totals],
        "verdict": "EVALUATED",
        "eps_used": eps,
        "closure_gap": C.closure_gap(),
        "dimension_slope": slope,
        "off_orbit_fraction": S.off_orbit_fraction(eps[-1]),
    }


def _trend(vals):
    v = [x for x in vals if np.isfinite(x)]
    if len(v) >= 2 and all(b <= a for a, b in zip(v, v[1:])):
        return "DECREASING"
    return "NOT_DECREASING"


_RUNNERS = {
    "smooth": _study_smooth,
    "curvature": _study_curvature,
    "transport": _study_transport,
    "distance": _study_distance,
    "measure": _study_measure,
    "cantor": _study_cantor,
}


# ---------------------------------------------------------------------------


def _lookup(result, key):
    if key == "final_value":
        vals = result.get("values") or []
        return vals[-1] if vals else None
    if key == "spread":
        lo, hi = result.get("liminf"), result.get("limsup")
        return None if lo is None or hi is None else hi - lo
    return result.get(key)


def check_tolerance(cfg, result):
    """List of failed criteria (empty when everything passes).

    Recognized keys: final_residual, max_residual, verdict, decreasing,
    at_most {key: bound}, at_least {key: bound}, targets {key: {value, abs|rel}},
    halving_ratio {key, range}.  ``final_value`` and ``spread`` (limsup - liminf)
    are derived keys.
    """
    tol = cfg.get("tolerance") or {}
    fails = []
    res = result.get("residuals") or []
    if "final_residual" in tol and (not res or not res[-1] <= tol["final_residual"]):
        fails.append(f"final_residual: {res[-1] if res else None} > {tol['final_residual']}")
    if "max_residual" in tol and (not res or not max(res) <= tol["max_residual"]):
        fails.append(f"max_residual: {max(res) if res else None} > {tol['max_residual']}")
    if "verdict" in tol and result.get("verdict") != tol["verdict"]:
        fails.append(f"verdict: {result.get('verdict')} != {tol['verdict']}")
    if tol.get("decreasing"):
        key = tol["decreasing"] if isinstance(tol["decreasing"], str) else "values"
        seq = result.get(key) or []
        if len(seq) < 2 or not all(b < a for a, b in zip(seq, seq[1:])):
            fails.append(f"decreasing: {key} = {seq} is not strictly decreasing")
    for key, bound in (tol.get("at_most") or {}).items():
        v = _lookup(result, key)
        if not (v is not None and abs(v) <= bound):
            fails.append(f"{key}: {v} exceeds {bound}")
    for key, bound in (tol.get("at_least") or {}).items():
        v = _lookup(result, key)
        if not (v is not None and v >= bound):
            fails.append(f"{key}: {v} below {bound}")
    for key, target in (tol.get("targets") or {}).items():
        v = _lookup(result, key)
        ref = float(target["value"])
        allowed = target["abs"] if "abs" in target else target["rel"] * abs(ref)
        if not (v is not None and abs(v - ref) <= allowed):
            fails.append(f"{key}: {v} not within {allowed:.3g} of {ref}")
    if "halving_ratio" in tol:
        rule = tol["halving_ratio"]
        seq = result.get(rule.get("key", "residuals")) or []
        lo, hi = rule["range"]
        ratios = [a / b if b else math.inf for a, b in zip(seq, seq[1:])]
        if not ratios or not all(lo <= r <= hi for r in ratios):
            fails.append(f"halving_ratio: {rule.get('key', 'residuals')} ratios {ratios} outside [{lo}, {hi}]")
    return fails


def _write_outputs(out_dir, report):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = dict(report)
    for name, (pts, vals, names) in (report.pop("_grids", None) or {}).items():
        export_grid_csv(out_dir / f"{name}.csv", pts, vals, names)
    with open(out_dir / "report.json", "w") as fh:
        json.dump(report, fh, indent=1, default=_jsonable)
    eps = report.get("eps") or []
    if report.get("values"):
        with open(out_dir / f"{report['study']}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps", "value", "residual"])
            res = report.get("residuals") or []
            for i, v in enumerate(report["values"]):
                w.writerow([eps[i] if i < len(eps) else "", v, res[i] if i < len(res) else ""])


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def run_report(cfg, out_dir=None, jobs=1):
    """Run one study (or a suite); returns the report dict with ``passed`` and ``failures``."""
    study = cfg.get("study")
    if study not in STUDIES:
        raise GeometryError(f"unknown study {study!r}; choose from {', '.join(STUDIES)}")
    if study == "suite":
        return _run_suite(cfg, out_dir, jobs)
    if cfg.get("example") and cfg["example"] not in REGISTRY:
        raise GeometryError(f"unknown example {cfg['example']!r}; registered: {', '.join(sorted(REGISTRY))}")
    eps = _eps(cfg)
    if study in SWEEPING and eps is None:
        raise GeometryError(f"study {study} needs an epsilon list")
    t0 = time.perf_counter()
    result = _RUNNERS[study](cfg, eps)
    report = {
        "study": study,
        "example": cfg.get("example"),
        "params": cfg.get("params") or {},
        "eps": result.pop("eps_used", eps) or [],
        "values": result.pop("values"),
        "residuals": result.pop("residuals"),
        "verdict": result.pop("verdict"),
        "wallclock_ms": round(1000 * (time.perf_counter() - t0), 1),
    }
    grids = result.pop("_grids", None)
    report.update(result)
    report["failures"] = check_tolerance(cfg, {**report})
    report["passed"] = not report["failures"]
    if out_dir is not None:
        _write_outputs(out_dir, {**report, "_grids": grids})
    return report


def _run_one(args):
    cfg, out = args
    try:
        return run_report(cfg, out)
    except GeometryError as exc:
        return {"study": cfg.get("study"), "name": cfg.get("name"), "passed": False, "failures": [f"error: {exc}"]}


def _run_suite(cfg, out_dir, jobs):
    items = cfg.get("studies") or []
    if not items:
        raise GeometryError("suite needs a non-empty list of studies")
    t0 = time.perf_counter()
    args = []
    for i, sub in enumerate(items):
        name = sub.get("name") or f"{i:02d}_{sub.get('study')}"
        sub = {**sub, "name": name}
        args.append((sub, None if out_dir is None else str(Path(out_dir) / name)))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            reports = list(ex.map(_run_one, args))
    else:
        reports = [_run_one(a) for a in args]
    failures = [f"{a[0]['name']}: {f}" for a, r in zip(args, reports) for f in r["failures"]]
    report = {
        "study": "suite",
        "example": None,
        "params": {},
        "eps": [],
        "values": [int(r["passed"]) for r in reports],
        "residuals": [],
        "verdict": "PASS" if not failures else "FAIL",
        "wallclock_ms": round(1000 * (time.perf_counter() - t0), 1),
        "studies": [{"name": a[0]["name"], "passed": r["passed"], "failures": r["failures"]} for a, r in zip(args, reports)],
        "failures": failures,
        "passed": not failures,
    }
    if out_dir is not None:
        _write_outputs(out_dir, report)
    return report
