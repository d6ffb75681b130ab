"""Compare the compiled and pure-numpy stepping kernels.

    python3 benchmarks/bench_stepper.py [--steps 2000] [--repeat 3]

Prints one row per (modes, replicas, h) case with the best wall time per
backend and the speed-up of the compiled core.
"""
import argparse
import time

import numpy as np

from neutral_spde_lab import simulate
from neutral_spde_lab.charfn import example_system

CASES = [  # (modes, replicas, h)
    (1, 1, 1e-2),
    (8, 1, 1e-2),
    (8, 1, 1e-3),
    (8, 16, 1e-3),
]


def best_time(sys, cfg, state, backend, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        simulate.run(sys, cfg, state, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    backends = [b for b in ("cython", "python") if b in simulate.BACKENDS]
    print(f"{'K':>3} {'R':>4} {'h':>8} {'N':>6} " + " ".join(f"{b + ' [s]':>12}" for b in backends) + "   speed-up")
    for K, R, h in CASES:
        sys = example_system(1.0, 0.1, 0.0, 0.2, modes=K, noise=np.ones(K))
        cfg = simulate.SimConfig(h=h, T=args.steps * h, seed=1, replicas=R, stride=10)
        state = simulate.zero_history(sys, h, replicas=R)
        times = {b: best_time(sys, cfg, state, b, args.repeat) for b in backends}
        speed = times["python"] / times["cython"] if len(times) == 2 else float("nan")
        row = " ".join(f"{times[b]:12.4f}" for b in backends)
        print(f"{K:>3} {R:>4} {h:>8.0e} {int(round(1 / h)):>6} {row}   {speed:8.1f}x")


if __name__ == "__main__":
    main()
