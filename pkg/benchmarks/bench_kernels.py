"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--n 100] [--d 7850] [--repeat 20]

Times each kernel and a full FLTG aggregation under both backends and
reports the largest absolute difference between their outputs. d = 7850
is the parameter count of softmax regression on 28x28 inputs.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from fltg import _pykernels, vecmath
from fltg.aggregation import AggregationInput, fltg

try:
    from fltg import _kernels
except ImportError:  # extension not built
    _kernels = None


def kernel_cases(m: np.ndarray, v: np.ndarray, w: np.ndarray):
    return {
        "dot": lambda k: k.dot(m[0], v),
        "row_dots": lambda k: k.row_dots(m, v),
        "row_sq_norms": lambda k: k.row_sq_norms(m),
        "weighted_row_sum": lambda k: k.weighted_row_sum(m, w),
        "pairwise_sq_dists": lambda k: k.pairwise_sq_dists(m),
    }


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def fltg_with(backend, inp: AggregationInput):
    saved = vecmath.kernels
    vecmath.kernels = backend
    try:
        return fltg(inp).global_update
    finally:
        vecmath.kernels = saved


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100, help="number of client updates")
    ap.add_argument("--d", type=int, default=7850, help="update dimension")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    m = rng.standard_normal((args.n, args.d))
    v = rng.standard_normal(args.d)
    w = rng.random(args.n)
    backends = [("python", _pykernels)] + ([("cython", _kernels)] if _kernels is not None else [])
    if _kernels is None:
        print("compiled extension not available; timing the numpy backend only")

    print(f"n={args.n} d={args.d} best of {args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{name:>14}" for name, _ in backends) + f"{'max |diff|':>14}")
    for name, fn in kernel_cases(m, v, w).items():
        times = [best_of(lambda: fn(k), args.repeat) for _, k in backends]
        outs = [np.asarray(fn(k)) for _, k in backends]
        diff = float(np.max(np.abs(outs[0] - outs[-1])))
        print(f"{name:<20}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times) + f"{diff:>14.3g}")

    inp = AggregationInput(
        m,
        server_update=rng.standard_normal(args.d) + m.mean(axis=0),
        prev_global_update=rng.standard_normal(args.d),
        round=2,
    )
    times = [best_of(lambda: fltg_with(k, inp), args.repeat) for _, k in backends]
    outs = [fltg_with(k, inp) for _, k in backends]
    diff = float(np.max(np.abs(outs[0] - outs[-1])))
    print(f"{'fltg (end to end)':<20}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times) + f"{diff:>14.3g}")


if __name__ == "__main__":
    main()
