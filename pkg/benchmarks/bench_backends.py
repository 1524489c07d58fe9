"""Compare the compiled and numpy backends on the two inner loops.

    python benchmarks/bench_backends.py [--repeat 3]

Each case is run with both backends on identical inputs; the script prints
wall times, the speedup and the largest difference between the results.
"""
import argparse
import time

import numpy as np

from renewalkit import backend
from renewalkit.kernels import ScalarKernelSet, TimeGrid
from renewalkit.spe import HistoryMeasure, rates_from_kernels, solve_spe
from renewalkit.volterra import solve_volterra


def volterra_case(n, d, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(n) * 0.01
    rates = rng.uniform(0.2, 2.0, size=(d, d))
    kern = np.exp(-rates[None] * t[:, None, None]) * rng.uniform(0, 0.3, size=(d, d))
    forcing = np.exp(-t)[:, None] * rng.uniform(0.5, 1.0, size=d)
    return lambda impl: solve_volterra(kern, forcing, 0.01, impl=impl)


def spe_case(t_max, dt=1e-3):
    grid = TimeGrid(t_max, dt)
    t = grid.nodes
    Phi = {("a", "b"): 0.9 * t * np.exp(-t), ("b", "a"): 0.9 * np.exp(-t)}
    scalar = ScalarKernelSet.from_kernels(grid, Phi, labels=("a", "b"))
    rates = rates_from_kernels(scalar)
    history = HistoryMeasure(atoms={"a": [(0.0, 1.0)]})
    return lambda impl: np.stack(list(solve_spe(rates, history, t_max=t_max / 2, impl=impl).N.values()))


def timed(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        fast = backend.get("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    slow = backend.get("python")
    cases = [
        ("volterra n=4000 d=1", volterra_case(4000, 1)),
        ("volterra n=4000 d=4", volterra_case(4000, 4)),
        ("volterra n=16000 d=2", volterra_case(16000, 2)),
        ("spe t_max=10 dt=1e-3", spe_case(10.0)),
        ("spe t_max=20 dt=1e-3", spe_case(20.0)),
    ]
    print(f"{'case':24s} {'cython [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for name, run in cases:
        tc, rc = timed(lambda: run(fast), args.repeat)
        tp, rp = timed(lambda: run(slow), args.repeat)
        diff = float(np.abs(rc - rp).max())
        print(f"{name:24s} {tc:11.4f} {tp:11.4f} {tp / tc:8.1f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
