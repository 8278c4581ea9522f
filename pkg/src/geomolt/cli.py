"""Command-line entry point: ``geomolt <study> [options]``."""

import argparse
import json
import logging
import sys

from .examples import REGISTRY
from .geometry import GeometryError
from .report import load_config, run_report

_DEFAULT_EXAMPLE = {
    "smooth": "kink",
    "curvature": "cube",
    "transport": "dihedral",
    "distance": "degenerate",
    "measure": "cube",
    "cantor": "cantor_curve",
}


def _eps_list(text):
    parts = [p for p in text.split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad epsilon list {text!r}") from exc


def _box(text):
    try:
        v = [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad box {text!r}") from exc
    if len(v) % 2 or not v:
        raise argparse.ArgumentTypeError("box needs an even number of coordinates")
    h = len(v) // 2
    return [v[:h], v[h:]]


def _parser():
    ap = argparse.ArgumentParser(prog="geomolt", description="Mollification and curvature-measure studies.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="study", required=True)
    for name in ("smooth", "curvature", "transport", "distance", "measure", "cantor", "suite"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--out", help="output directory for report.json and CSV tables")
        p.add_argument("--eps", type=_eps_list, help="comma-separated epsilon list, e.g. 0.1,0.05,0.025")
        p.add_argument("--grid", type=int, help="grid resolution")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for suites")
        if name != "suite":
            p.add_argument("--example", "--field", "--metric", dest="example", choices=sorted(REGISTRY), help="bundled example")
        if name == "smooth":
            p.add_argument("--mode", choices=("background", "covering"), help="smoothing against a background or a covering")
        if name in ("smooth", "curvature"):
            p.add_argument("--region", type=_box, help="chart box x0,y0,x1,y1")
        if name == "curvature":
            p.add_argument("--kappa", type=int, help="also integrate the Lipschitz-Killing form of this order")
            p.add_argument("--probes", type=int, help="probe points per axis (same as --grid)")
        if name == "measure":
            p.add_argument("--set", dest="set_expr", help="region expression, e.g. 'diff(all(), point(0,0,0))'")
    return ap


def build_config(args):
    cfg = load_config(args.config) if args.config else {}
    if cfg.get("study") not in (None, args.study):
        raise GeometryError(f"config is for study {cfg['study']!r}, not {args.study!r}")
    cfg["study"] = args.study
    if getattr(args, "example", None):
        cfg["example"] = args.example
    if args.study != "suite":
        cfg.setdefault("example", _DEFAULT_EXAMPLE[args.study])
    if args.eps is not None:
        cfg["eps"] = args.eps
    if args.grid is not None:
        cfg["grid"] = args.grid
    opts = cfg.setdefault("options", {})
    if getattr(args, "set_expr", None):
        opts["set"] = args.set_expr
    if getattr(args, "mode", None):
        opts["smoother"] = args.mode
    if getattr(args, "region", None):
        opts["region"] = args.region
    if getattr(args, "kappa", None) is not None:
        opts["kappa"] = args.kappa
    if getattr(args, "probes", None) is not None:
        cfg["grid"] = args.probes
    return cfg


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = build_config(args)
        report = run_report(cfg, args.out, jobs=max(1, args.jobs))
    except (GeometryError, OSError) as exc:
        print(f"geomolt: error: {exc}", file=sys.stderr)
        return 2
    summary = {k: report.get(k) for k in ("study", "example", "eps", "values", "residuals", "verdict", "wallclock_ms")}
    print(json.dumps(summary, default=str))
    if not report["passed"]:
        for f in report["failures"]:
            print(f"geomolt: tolerance failure: {f}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
