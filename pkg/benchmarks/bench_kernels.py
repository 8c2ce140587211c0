"""Time the compiled kernels against the numpy fallback on typical inputs.

    python benchmarks/bench_kernels.py [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from anchorbox import _kernels_py
from anchorbox.models import train_forest

try:
    from anchorbox import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def cases(rng):
    D = 10
    pts = np.ascontiguousarray(rng.uniform(-5, 5, (20000, D)))
    idx = np.arange(len(pts), dtype=np.intp)
    lo, hi = np.full(D, -2.0), np.full(D, 2.0)
    act = np.arange(D, dtype=np.intp)
    inv = np.full(D, 0.1)
    negs = np.ascontiguousarray(pts[:400])
    box_lo, box_hi = np.full(D, -0.01), np.full(D, 0.01)
    negs = negs[np.any(np.abs(negs) > 0.01, axis=1)]
    sides = np.arange(2 * D, dtype=np.intp)
    X = rng.normal(size=(500, D))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    forest = train_forest(X, y, n_estimators=100, rng=rng)
    Q = np.ascontiguousarray(rng.normal(size=(20000, D)))
    args = (Q, forest._feature, forest._threshold, forest._left, forest._right, forest._roots)
    return {
        "filter_closed": lambda k: k.filter_closed(pts, idx, lo, hi, act),
        "filter_open": lambda k: k.filter_open(pts, idx, lo, hi, act),
        "nearest_index": lambda k: k.nearest_index(pts, idx, np.zeros(D), inv, act),
        "expand_box": lambda k: k.expand_box(box_lo, box_hi, negs, np.full(D, -5.0),
                                             np.full(D, 5.0), act, sides, True),
        "forest_apply": lambda k: k.forest_apply(*args),
    }


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _kernels_c is None:
            print(f"{name:<16}{t_py:>12.3f}{'n/a':>12}{'':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_kernels_c), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<16}{t_py:>12.3f}{t_c:>12.3f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
