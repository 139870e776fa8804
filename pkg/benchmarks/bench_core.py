"""Time the compiled particle-update loop against the numpy fallback.

    python3 benchmarks/bench_core.py [--steps 2000] [--sizes 100 1000 5000]

Both backends run the same pairs and noise; the script also reports the
largest difference between their final particles.
"""
import argparse
import time

import numpy as np

from schoenberg import _fallback
from schoenberg.measure import RandomSource
from schoenberg.synthetic import variance_task

try:
    from schoenberg import _core
except ImportError:
    _core = None


def _inputs(n, steps, seed=0):
    rng = RandomSource(seed)
    data = variance_task(200, 10, 0.5, rng.child(0), scale=1.83)
    idx = rng.child(1).integers(0, data.count, size=(steps, 2))
    d2 = np.ascontiguousarray(data.squared_distances[idx[:, 0], idx[:, 1]])
    yy = np.ascontiguousarray(data.label_products[idx[:, 0], idx[:, 1]])
    noise = rng.child(2).standard_normal((steps, n))
    xi = rng.child(3).uniform(0.0, 1.67, size=n)
    return xi, d2, yy, noise, np.full(steps, 1e-4)


def _time(fn, xi, d2, yy, noise, eta, n, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        x = xi.copy()
        t = time.perf_counter()
        fn(x, d2, yy, noise, eta, 0.5 * n, 100.0, 1e4, 0.0, 1.67, np.empty(n))
        best = min(best, time.perf_counter() - t)
        out = x
    return best, out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 5000])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'N':>6} {'python s':>10} {'cython s':>10} {'speedup':>8} {'max diff':>10}")
    for n in args.sizes:
        xi, d2, yy, noise, eta = _inputs(n, args.steps)
        tp, xp = _time(_fallback.langevin_pair_steps, xi, d2, yy, noise, eta, n, args.repeat)
        if _core is None:
            print(f"{n:>6} {tp:>10.4f} {'n/a':>10}")
            continue
        tc, xc = _time(_core.langevin_pair_steps, xi, d2, yy, noise, eta, n, args.repeat)
        print(f"{n:>6} {tp:>10.4f} {tc:>10.4f} {tp / tc:>8.1f} {np.abs(xp - xc).max():>10.2e}")


if __name__ == "__main__":
    main()
