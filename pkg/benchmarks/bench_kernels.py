"""Compiled vs pure-Python raster kernels.

Checks that both backends return identical arrays, then times each on a
fix-binning workload and a road-tracing workload of desk-scale size.

    python benchmarks/bench_kernels.py --points 200000 --segments 5000 --repeat 5
"""

import argparse
import json
import sys
import timeit

import numpy as np

from vaeinfocgan import _pykernels

try:
    from vaeinfocgan import _ckernels
except ImportError:
    _ckernels = None


def workloads(points, segments, n, seed):
    rng = np.random.default_rng(seed)
    ox, oy = 2686717, 5858336
    # a margin of n/4 on each side so some fixes fall outside the window
    tx = rng.integers(ox - n // 4, ox + n + n // 4, points).astype(np.int64)
    ty = rng.integers(oy - n // 4, oy + n + n // 4, points).astype(np.int64)
    t = rng.uniform(-10.0, 250.0, points)
    ch = rng.integers(0, 12, points).astype(np.int64)
    bins = (tx, ty, t, ch, ox, oy, n, 0.0, 240.0, 12)
    xy = rng.uniform(-2.0, n + 2.0, (4, segments))
    trace = (*(np.ascontiguousarray(v) for v in xy), n)
    return {"bin_points": bins, "trace_segments": trace}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--segments", type=int, default=5_000)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if _ckernels is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1

    rows = []
    for name, inputs in workloads(args.points, args.segments, args.n, args.seed).items():
        py_fn, c_fn = getattr(_pykernels, name), getattr(_ckernels, name)
        if not np.array_equal(py_fn(*inputs), c_fn(*inputs)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        t_py = min(timeit.repeat(lambda: py_fn(*inputs), number=1, repeat=args.repeat))
        t_c = min(timeit.repeat(lambda: c_fn(*inputs), number=1, repeat=args.repeat))
        rows.append({"kernel": name, "python_s": t_py, "cython_s": t_c, "speedup": t_py / t_c})

    print(f"{'kernel':<16}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<16}{1e3 * r['python_s']:>14.3f}{1e3 * r['cython_s']:>14.3f}{r['speedup']:>9.1f}x")
    print(json.dumps({"args": vars(args), "results": rows}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
