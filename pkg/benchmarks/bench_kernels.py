"""Time the compiled and pure-Python kernels on the same inputs.

Usage: python benchmarks/bench_kernels.py [--repeat 3]

Each kernel runs on both backends with identical inputs; the script checks
the outputs agree and prints the best wall time of each.
"""

import argparse
import time

import numpy as np

from rotated_mondrian import _backend
from rotated_mondrian.core import SeededRng, bounding_box
from rotated_mondrian.features import SharedCellCounts, build_feature_map
from rotated_mondrian.mondrian import build_mondrian
from rotated_mondrian.stochgeom import cell_geometry, sample_typical_cells


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases():
    pts = SeededRng(1).generator().random((1000, 3))
    box = bounding_box(pts)
    yield "build_tree (N=1000, d=3, lambda=300)", \
        lambda b: build_mondrian(box, 300.0, SeededRng(2), points=pts, min_split=2, backend=b), \
        lambda t: (t.cut, t.loc)

    tree = build_mondrian(box, 300.0, SeededRng(2), points=pts, min_split=2)
    query = SeededRng(3).generator().random((20000, 3)) * box.widths + box.lower

    def descend(b):
        k = _backend.get(b)
        return k.descend(query, tree.dim, tree.loc, tree.left, tree.right, tree.cut, 300.0)
    yield "descend (20000 rows)", descend, lambda a: a

    normals, s = sample_typical_cells(5000, 3, 1.0, 2, SeededRng(4))
    yield "2-d cell clipping (5000 cells, 6 slabs)", \
        lambda b: cell_geometry(normals, s, backend=b), lambda a: a
    normals3, s3 = sample_typical_cells(300, 2, 1.0, 3, SeededRng(5))
    yield "3-d vertex enumeration (300 cells, 6 slabs)", \
        lambda b: cell_geometry(normals3, s3, backend=b), lambda a: a

    X = SeededRng(6).generator().random((400, 2))
    fmap = build_feature_map(X, "rotated-mondrian", 20, 50.0, SeededRng(7))

    yield "pair downdate (N=400, M=20)", \
        lambda b: SharedCellCounts(fmap, X, 200, backend=b).advance(50.0), lambda a: a


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        _backend.get("cython")
    except ImportError:
        print("compiled backend not built; nothing to compare")
        return
    print(f"{'kernel':48s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s}")
    for name, fn, key in cases():
        tc, oc = best_of(lambda: fn("cython"), args.repeat)
        tp, op = best_of(lambda: fn("python"), args.repeat)
        kc, kp = key(oc), key(op)
        kc, kp = (kc, kp) if isinstance(kc, tuple) else ((kc,), (kp,))
        for a, b in zip(kc, kp):
            if not np.allclose(a, b, rtol=1e-12, atol=1e-12, equal_nan=True):
                raise SystemExit(f"{name}: backends disagree")
        print(f"{name:48s} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
