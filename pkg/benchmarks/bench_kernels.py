"""Compiled vs interpreted timing of the numeric hot spots.

    python3 benchmarks/bench_kernels.py [--repeat N]

The simplex pivot loop is compared with and without numba (``py_func`` is
the same source run by CPython). The GRU passes and the Adam update have no
compiled variant: they are timed as-is to show where the time goes.
"""
import argparse
import time

import numpy as np

from hemsdr import kernels, milp, nn
from hemsdr._accel import NUMBA_ENABLED
from hemsdr.core import DayProfile, SystemParams


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compilation)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_simplex(repeat):
    rng = np.random.default_rng(0)
    p = SystemParams()
    days = [DayProfile(rng.uniform(0, 2, 24), rng.uniform(0, 0.8, 24), rng.uniform(0.02, 0.4, 24))
            for _ in range(5)]

    def solve_all():
        for d in days:
            milp.solve_day(d, p)

    compiled = kernels.simplex_iterate
    fast = best_of(solve_all, repeat)
    kernels.simplex_iterate = compiled.py_func
    try:
        slow = best_of(solve_all, max(1, repeat // 3))
    finally:
        kernels.simplex_iterate = compiled
    return fast, slow


def bench_gru(repeat):
    net = nn.GruNet(hidden_size=64, num_layers=2, window=168, seed=0)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(64, 168)), rng.normal(size=(64, 1))
    fwd = best_of(lambda: net.forward_core(x), repeat)
    both = best_of(lambda: net.loss_and_grads(x, y), repeat)
    return fwd, both


def bench_adam(repeat):
    net = nn.DenseNet([7, 100, 200, 200, 1], "relu", seed=0)
    grads = [np.full_like(p, 1e-3) for p in net.params]
    return best_of(lambda: nn.adam_step(net, grads, 1e-4), repeat * 20)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"numba enabled: {NUMBA_ENABLED}")
    fast, slow = bench_simplex(args.repeat)
    if NUMBA_ENABLED:
        print(f"MILP, 5 x 24-slot days   numba : {fast * 1e3:9.1f} ms")
        print(f"MILP, 5 x 24-slot days   python: {slow * 1e3:9.1f} ms  "
              f"(speed-up x{slow / fast:.1f})")
    else:
        print(f"MILP, 5 x 24-slot days   python: {fast * 1e3:9.1f} ms  (numba disabled)")
    fwd, both = bench_gru(args.repeat)
    print(f"GRU 2x64, window 168, batch 64  forward {fwd * 1e3:7.1f} ms, "
          f"forward+backward {both * 1e3:7.1f} ms")
    print(f"Adam step, 7-100-200-200-1 critic: {bench_adam(args.repeat) * 1e6:7.1f} us")


if __name__ == "__main__":
    main()
