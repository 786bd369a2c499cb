"""Compare the compiled kernel backend against the pure-numpy fallback.

Runs the same fixed sampler workload in two subprocesses (the backend is
chosen at import time, so each measurement gets a fresh interpreter) and
prints per-iteration timings plus the speedup.

Usage: python benchmarks/backend_bench.py [--iters 200]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
from srpc import Dataset, Hyperparameters, ChainConfig, run_chain, backend_name

iters = int(sys.argv[1])
rng = np.random.default_rng(123)
n, p, S, d = 1200, 50, 4, 4
ds = Dataset(
    x=rng.integers(1, d + 1, (n, p)), s=np.repeat(np.arange(1, S + 1), n // S),
    y=rng.integers(0, 2, n), w_dem=np.zeros((n, 0)),
    d=np.full(p, d), S=S, n=n, p=p,
)
out = {"backend": backend_name()}
for k0 in (20, 3):
    cfg = ChainConfig(n_iter=iters, burn_in=iters // 2, seed=9, fixed_K0=k0)
    t0 = time.perf_counter()
    run_chain(ds, Hyperparameters(K0=20, Ks=5), cfg, record_blocks=("C",))
    out[f"ms_per_iter_k{k0}"] = (time.perf_counter() - t0) / iters * 1e3
print(json.dumps(out))
"""


def run(iters, pure):
    env = dict(os.environ)
    if pure:
        env["SRPC_PURE_PYTHON"] = "1"
    else:
        env.pop("SRPC_PURE_PYTHON", None)
    res = subprocess.run(
        [sys.executable, "-c", _WORKER, str(iters)],
        capture_output=True, text=True, env=env, check=True,
    )
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=200)
    args = ap.parse_args()
    compiled = run(args.iters, pure=False)
    pure = run(args.iters, pure=True)
    print(f"{'workload':<18}{compiled['backend']:>12}{pure['backend']:>12}{'speedup':>10}")
    for key in ("ms_per_iter_k20", "ms_per_iter_k3"):
        c, p = compiled[key], pure[key]
        print(f"{key:<18}{c:>10.2f}ms{p:>10.2f}ms{p / c:>9.2f}x")
    if compiled["backend"] == pure["backend"]:
        print("note: compiled extension unavailable; both runs used the fallback")


if __name__ == "__main__":
    main()
