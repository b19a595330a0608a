"""Benchmark the hot kernels on the numba path vs the pure-python fallback.

Runs every workload twice in subprocesses, once with POLLINGFLUID_NUMBA=1 and
once with =0, and prints a speedup table.  Workload sizes are chosen so the
pure-python pass stays under a minute; pass --scale to grow them.

Usage: python benchmarks/bench_kernels.py [--scale N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = """
import json, time
import numpy as np
import pollingfluid._kernels as k
from pollingfluid.branching import batch_zeta, perron, session_mean_matrix, visit_means
from pollingfluid.config import ModelConfig, QueueSpec
from pollingfluid.convergence import busy_period_moments
from pollingfluid.distributions import DeterministicGating, Exponential
from pollingfluid.simulator import batch_session_offspring, batch_visit_offspring, run_trace

scale = {scale}
cfg = ModelConfig(
    queues=(QueueSpec(2.0, Exponential(3.0), DeterministicGating(1)),
            QueueSpec(2.0, Exponential(3.0), DeterministicGating(1))),
    base_seed=99)
sp = perron(session_mean_matrix(visit_means(cfg)).M)

def timed(fn):
    fn()  # warm-up: JIT compile / cache load outside the timing
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0

results = {{
    "mode": "numba" if k.NUMBA_ENABLED else "python",
    "trace to rho^12": timed(lambda: run_trace(cfg, "bench", t_stop=sp.rho ** 12)),
    "session offspring x%d" % (20000 * scale): timed(
        lambda: batch_session_offspring(cfg, 0, 20000 * scale, seed_tag="bench-s")),
    "visit offspring x%d" % (20000 * scale): timed(
        lambda: batch_visit_offspring(cfg, 0, 20000 * scale, seed_tag="bench-v")),
    "zeta depth 10 x%d" % (500 * scale): timed(
        lambda: batch_zeta(cfg, 0, 10, sp, 500 * scale, seed_tag="bench-z")),
    "busy periods x%d" % (20000 * scale): timed(
        lambda: busy_period_moments(cfg, 0, 2, 20000 * scale, seed_tag="bench-b")),
}}
print(json.dumps(results))
"""


def run_mode(flag: str, scale: int) -> dict:
    env = dict(os.environ, POLLINGFLUID_NUMBA=flag)
    proc = subprocess.run([sys.executable, "-c", WORKER.format(scale=scale)],
                          capture_output=True, text=True, env=env, timeout=3600)
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scale", type=int, default=1, help="workload multiplier")
    args = parser.parse_args()
    print(f"benchmarking (scale {args.scale}) ...")
    numba_res = run_mode("1", args.scale)
    python_res = run_mode("0", args.scale)
    width = max(len(name) for name in numba_res if name != "mode")
    print(f"{'workload':<{width}}  {'numba':>10}  {'python':>10}  {'speedup':>8}")
    for name, jit_t in numba_res.items():
        if name == "mode":
            continue
        py_t = python_res[name]
        print(f"{name:<{width}}  {jit_t:>9.3f}s  {py_t:>9.3f}s  {py_t / jit_t:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
