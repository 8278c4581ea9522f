"""Time the compiled kernels against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py [--repeat k]``.
"""

import argparse
import timeit

import numpy as np

from geomolt import _pykernels

try:
    from geomolt import _ckernels
except ImportError:
    _ckernels = None


def _cases(rng):
    pts = rng.uniform(-0.5, 0.5, size=(2000, 2))
    verts = np.array([[-0.3, -0.2], [0.4, -0.1], [0.2, 0.5], [-0.4, 0.3]])
    xs = rng.uniform(0.0, 1.0, size=200_000)
    return {
        "polygon_jets (2000 points, order 2)": lambda m: m.polygon_jets(pts, verts, 0.1, 2),
        "cantor_values (2e5 samples)": lambda m: m.cantor_values(xs),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled backend not available; only the fallback can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in _cases(rng).items():
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:40s} {tp:12.2f} {'-':>12s} {'-':>8s}")
            continue
        a, b = fn(_pykernels), fn(_ckernels)
        pairs = zip(a, b) if isinstance(a, tuple) else [(a, b)]
        same = all(np.allclose(x, y, rtol=1e-10, atol=1e-12) for x, y in pairs)
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        flag = "" if same else "  (outputs differ)"
        print(f"{name:40s} {tp:12.2f} {tc:12.2f} {tp / tc:7.2f}x{flag}")


if __name__ == "__main__":
    main()
