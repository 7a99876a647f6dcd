"""Compare the compiled and pure-Python integration kernels.

Usage::

    python benchmarks/bench_kernels.py [--T 2] [--dt 1e-3] [--repeat 3]

For each builtin and formulation the script times a fixed-step RK4 run on
every available backend, reports the best wall time and the speedup, and
checks that the two backends produce the same trajectory.
"""

import argparse
import time

from vnc.dynamics import compare_trajectories, simulate
from vnc.kernels import available_backends
from vnc.state import TangentState
from vnc.systems import get_builtin

CASES = [
    ("se2_knife", "closedloop", [0, 0, 0], [1, 0, 1]),
    ("se2_knife", "constrained", [0, 0, 0], [1, 0, 1]),
    ("rolling_disk", "closedloop", [0, 0, 0, 0], [1, 0, 1, 0.5]),
    ("chaplygin", "nonholonomic", [0, 0, 0], [1, 0, 1]),
    ("offset_sleigh", "nonholonomic", [0, 0, 0], [0.5, 0, 1]),
]


def best_time(fn, repeat):
    best, result = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - start)
    return best, result


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--T", type=float, default=2.0)
    parser.add_argument("--dt", type=float, default=1e-3)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    backends = available_backends()
    steps = round(args.T / args.dt)
    print(f"RK4, {steps} steps per run, best of {args.repeat}; backends: {', '.join(backends)}")
    print(f"{'system':<14}{'formulation':<14}" + "".join(f"{b + ' [s]':>14}" for b in backends)
          + f"{'speedup':>10}{'max diff':>12}")
    for name, form, q0, v0 in CASES:
        system = get_builtin(name)
        initial = TangentState(q0, v0)
        times, trajs = {}, {}
        for backend in backends:
            times[backend], trajs[backend] = best_time(
                lambda: simulate(system, initial, form, dt=args.dt, T=args.T, backend=backend), args.repeat
            )
        row = f"{name:<14}{form:<14}" + "".join(f"{times[b]:>14.4f}" for b in backends)
        if len(backends) == 2:
            diff = compare_trajectories(trajs["cython"], trajs["python"]).max_distance
            row += f"{times['python'] / times['cython']:>9.0f}x{diff:>12.1e}"
        print(row)


if __name__ == "__main__":
    main()
