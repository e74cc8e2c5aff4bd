"""Timing: compiled vs pure-Python kernels, and the two quadratic routes.

Run from the repository root:

    python3 benchmarks/bench_backends.py [--repeats 3]

The kernel comparison re-launches this script in a subprocess per
backend (the choice is fixed at import time through the environment
variable REPLICA_ES_BACKEND), solving a fixed grid of reduced systems
cold and reporting the per-solve mean.  The route comparison times the
interior-point and operator-splitting solvers on one matched sample.
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time

GRID = [
    (0.7, 0.1, 0.0),
    (0.9, 0.3, 0.0),
    (0.975, 0.0139, 0.0),
    (0.9, 0.3, 0.05),
    (0.975, 1.0, 0.05),
    (0.8, 0.5, 0.2),
    (0.65, 0.08, 0.01),
    (0.95, 1.5, 0.4),
]


def run_grid(repeats):
    from replica_es import ProblemParams, backend_name, solve_reduced

    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for alpha, r, eta in GRID:
            solve_reduced(ProblemParams(alpha, r, eta))
        best = min(best, time.perf_counter() - start)
    return {"backend": backend_name, "per_solve_ms": 1e3 * best / len(GRID)}


def bench_kernels(repeats):
    results = []
    for choice in ("c", "python"):
        env = dict(os.environ, REPLICA_ES_BACKEND=choice)
        proc = subprocess.run(
            [sys.executable, __file__, "--grid-only", "--repeats", str(repeats)],
            env=env, capture_output=True, text=True,
        )
        if proc.returncode != 0:
            print(f"backend {choice!r} failed:\n{proc.stderr}", file=sys.stderr)
            continue
        results.append(json.loads(proc.stdout))
    for res in results:
        print(f"  {res['backend']:>7}: {res['per_solve_ms']:8.3f} ms per solve")
    if len(results) == 2:
        print(f"  speedup: {results[1]['per_solve_ms'] / results[0]['per_solve_ms']:.1f}x")


def bench_routes(repeats):
    import numpy as np

    from replica_es import solve_program

    rng = np.random.default_rng(1)
    X = rng.standard_normal((100, 800))
    for method in ("interior-point", "splitting"):
        best = math.inf
        for _ in range(repeats):
            start = time.perf_counter()
            inst = solve_program(X, 0.9, 0.01, method=method)
            best = min(best, time.perf_counter() - start)
        print(f"  {method:>14}: {1e3 * best:8.1f} ms  "
              f"(objective {inst.objective:.9f})")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--grid-only", action="store_true",
                    help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.grid_only:
        json.dump(run_grid(args.repeats), sys.stdout)
        return
    print("reduced-system solver, cold starts over an 8-point grid:")
    bench_kernels(args.repeats)
    print("quadratic program routes, one 100 x 800 sample at eta = 0.01:")
    bench_routes(args.repeats)


if __name__ == "__main__":
    main()
