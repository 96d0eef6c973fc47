"""Times the compiled cone-projection kernel against the NumPy fallback.

Run from anywhere after installing the package:

    python3 benchmarks/bench_projection.py [--draws N] [--repeat R]

Both implementations are checked for exact agreement on every workload
before any number is reported; a mismatch aborts with exit code 1.
"""

import argparse
import sys
from time import perf_counter

import numpy as np

from affiltest.projection import IMPLEMENTATION, available_implementations


def _workload(rng, j, draws):
    g = rng.normal(size=(j, j + 2))
    sigma = g @ g.T / (j + 2) + 0.05 * np.eye(j)
    w = np.linalg.inv(sigma)
    z = rng.normal(size=(draws, j)) @ np.linalg.cholesky(sigma).T
    return w, z


def _time(fn, w, z, repeat):
    fn(w, z[:256])  # warm up
    best = np.inf
    for _ in range(repeat):
        t0 = perf_counter()
        out = fn(w, z)
        best = min(best, perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--draws", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    impls = available_implementations()
    print(f"active kernel: {IMPLEMENTATION}")
    print(f"{'J':>3} {'draws':>8} " +
          " ".join(f"{name:>12}" for name in impls) + f" {'speedup':>8}")

    rng = np.random.Generator(np.random.Philox(key=args.seed))
    ok = True
    for j in (1, 3, 6, 10):
        w, z = _workload(rng, j, args.draws)
        times, outs = {}, {}
        for name, fn in impls.items():
            times[name], outs[name] = _time(fn, w, z, args.repeat)
        first, *rest = outs.values()
        if not all(np.array_equal(first, other) for other in rest):
            print(f"J={j}: implementations disagree", file=sys.stderr)
            ok = False
            continue
        cells = " ".join(f"{times[name] * 1e3:>10.1f}ms" for name in impls)
        ratio = max(times.values()) / min(times.values())
        print(f"{j:>3} {args.draws:>8} {cells} {ratio:>7.1f}x")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
