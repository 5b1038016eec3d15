"""Time the compiled and pure-Python kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import importlib
import random
import timeit

import numpy as np


def polylines(n, seed=0):
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        k = rng.randint(3, 12)
        pts = [(rng.randint(0, 255), rng.randint(0, 255)) for _ in range(k)]
        out.append(([p[0] for p in pts], [p[1] for p in pts]))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    impls = {"python": importlib.import_module("geocad._kernels_py")}
    try:
        impls["cython"] = importlib.import_module("geocad._kernels")
    except ImportError:
        print("compiled kernels not built; timing the fallback only")

    lines = polylines(2000)
    segs = np.random.default_rng(1).integers(0, 256, (20000, 8)).tolist()
    rng = np.random.default_rng(2)
    a, b = rng.random((2000, 3)), rng.random((2000, 3))
    cases = {
        "polyline_self_intersects x2000": lambda k: [k.polyline_self_intersects(xs, ys) for xs, ys in lines],
        "segments_intersect x20000": lambda k: [k.segments_intersect(*s) for s in segs],
        "nn_sqdist 2000x2000": lambda k: k.nn_sqdist(a, b),
    }
    print(f"{'kernel':34}" + "".join(f"{name:>12}" for name in impls) + ("     speedup" if len(impls) > 1 else ""))
    for label, fn in cases.items():
        times = {name: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) for name, k in impls.items()}
        row = f"{label:34}" + "".join(f"{t * 1e3:10.1f}ms" for t in times.values())
        if len(times) > 1:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
