#!/usr/bin/env python3
"""Benchmark the numba-compiled trial kernels against the pure-Python
fallback (AIMASSIST_NO_NUMBA=1), verifying both paths also produce
identical records.

Usage: python3 benchmarks/bench_kernels.py [--trials N]
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKLOAD = r"""
import json, sys, time
from aimassist import agents, harness, kernels
from aimassist.assist import AssistConfig

trials = int(sys.argv[1])
params = agents.preset("head")
cfg = AssistConfig(method="gravity")
# warm-up: first call pays the JIT compile (or nothing on the fallback)
harness.run_batch("select", params, cfg, 2, seed=1)
t0 = time.time()
records = harness.run_batch("select", params, cfg, trials, seed=42)
elapsed = time.time() - t0
csv = harness.records_to_csv(records)
print(json.dumps({
    "numba": kernels.NUMBA_ENABLED,
    "trials": trials,
    "subtasks": len(records),
    "seconds": elapsed,
    "csv_digest": __import__("hashlib").sha256(csv.encode()).hexdigest(),
}))
"""


def run(flag: str, trials: int) -> dict:
    env = dict(os.environ, AIMASSIST_NO_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", WORKLOAD, str(trials)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=60)
    args = ap.parse_args()

    fast = run("0", args.trials)
    slow = run("1", args.trials)
    assert fast["numba"] and not slow["numba"]
    same = fast["csv_digest"] == slow["csv_digest"]
    print(f"{'path':14s} {'trials':>7s} {'subtasks':>9s} {'seconds':>9s} {'per-trial':>10s}")
    for tag, r in (("numba", fast), ("pure-python", slow)):
        per = r["seconds"] / r["trials"] * 1000.0
        print(f"{tag:14s} {r['trials']:7d} {r['subtasks']:9d} "
              f"{r['seconds']:9.3f} {per:8.2f}ms")
    print(f"speedup: {slow['seconds'] / fast['seconds']:.1f}x"
          f"   records identical: {same}")
    if not same:
        sys.exit(1)


if __name__ == "__main__":
    main()
