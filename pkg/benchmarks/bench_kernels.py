"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py [--N 400] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from sampdesign import _kernels
from sampdesign.cps import cps_design_from_pi


def cases(N, seed=0):
    r = np.random.default_rng(seed)
    pi = r.uniform(0.05, 0.6, N)
    pi *= (N // 8) / pi.sum()
    X = r.uniform(0, 1, (N, 2))
    A = np.column_stack([pi, X]) / pi[:, None]
    order = r.permutation(N)
    u = r.random(10 * N)
    params = cps_design_from_pi(pi)
    logB = params.logB()
    centers = np.sort(r.choice(N, N // 8, replace=False))
    return {
        "flight": lambda k: k.flight(A, pi, order, u),
        "pivotal_sequential": lambda k: k.pivotal_sequential(pi, u),
        "local_pivotal": lambda k: k.local_pivotal(pi, X, u),
        "local_cube": lambda k: k.local_cube(A, pi, X, u),
        "nearest_assign": lambda k: k.nearest_assign(X, centers),
        "cps_draw": lambda k: k.cps_draw(params.lam, logB, params.n_free, u),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = list(_kernels.BACKENDS)
    print(f"N = {args.N}; backends: {', '.join(backends)} (active: {_kernels.BACKEND})")
    print(f"{'kernel':20s}" + "".join(f"{b + ' ms':>14s}" for b in backends) + f"{'speed-up':>10s}")
    for name, fn in cases(args.N).items():
        ms = {}
        for b in backends:
            k = _kernels.get(b)
            fn(k)
            ms[b] = 1000 * min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat))
        speed = f"{ms['python'] / ms['cython']:9.1f}x" if "cython" in ms else ""
        print(f"{name:20s}" + "".join(f"{ms[b]:14.3f}" for b in backends) + speed)


if __name__ == "__main__":
    main()
