"""Compiled kernels against the pure-Python fallback.

Each backend runs in its own interpreter because ``SYMDP_DISABLE_JIT`` is
read at import time. Compilation happens once (numba caches to disk) and is
excluded by a warm-up pass.

    python benchmarks/bench_kernels.py [--vars 10] [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
from symdp._jit import backend
from symdp.dp import admissible_heuristic, value_iteration
from symdp.generator import generate_problem
from symdp.oracle import oracle_value_iteration
from symdp.planners import make_rng, run_rtdp, run_srtdp

n, repeat = int(sys.argv[1]), int(sys.argv[2])


def vi():
    m = generate_problem(0, n, 10, 3)
    value_iteration(m, tol=1e-6)


def srtdp():
    m = generate_problem(0, n, 10, 3)
    run_srtdp(m, admissible_heuristic(m), m.start, 10, 20, make_rng(0), mode="value")


def rtdp():
    m = generate_problem(0, n, 10, 3)
    run_rtdp(m, admissible_heuristic(m), m.start, 10, 20, make_rng(0))


def oracle():
    oracle_value_iteration(generate_problem(0, min(n, 12), 10, 3), residual=1e-8)


out = {"backend": backend()}
for name, fn in [("value iteration", vi), ("symbolic RTDP", srtdp), ("RTDP", rtdp), ("oracle VI", oracle)]:
    fn()  # warm-up: compile or load cached machine code
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run(disable: bool, n: int, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("SYMDP_DISABLE_JIT", None)
    if disable:
        env["SYMDP_DISABLE_JIT"] = "1"
    proc = subprocess.run(
        [sys.executable, "-c", WORKLOAD, str(n), str(repeat)], env=env, capture_output=True, text=True, check=True
    )
    return json.loads(proc.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vars", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    jit = run(False, args.vars, args.repeat)
    py = run(True, args.vars, args.repeat)
    print(f"{args.vars} variables, best of {args.repeat}; backends: {jit['backend']} / {py['backend']}")
    print(f"{'workload':<18}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for key in jit:
        if key == "backend":
            continue
        print(f"{key:<18}{jit[key]:>12.4f}{py[key]:>12.4f}{py[key] / jit[key]:>9.1f}x")


if __name__ == "__main__":
    main()
