"""Compare the numba and numpy backends.

Kernel timings run in-process (both implementations are importable under
the default backend); end-to-end timings run a short simulation in a
subprocess per backend, since the backend is fixed at import time.

    python benchmarks/bench_kernels.py [--rounds 2000] [--dim 1000]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from detsgrad import kernels
from detsgrad._accel import USE_NUMBA
from detsgrad.graph import ring

E2E = """
import json, time
from detsgrad._accel import BACKEND
from detsgrad.presets import presets
from detsgrad.sim import SimConfig, run
cfg = SimConfig.model_validate(dict(presets()[{preset!r}], max_iterations={rounds}, cadence={rounds}))
run(cfg.replace(max_iterations=10, cadence=10))  # warm-up / jit
t = time.perf_counter(); run(cfg); dt = time.perf_counter() - t
print(json.dumps(dict(backend=BACKEND, seconds=dt)))
"""


def bench_kernels(n, dim, repeat):
    g = ring(n)
    rng = np.random.default_rng(0)
    W = rng.standard_normal((n, dim))
    W_hat = W + 1e-3 * rng.standard_normal((n, dim))
    G = rng.standard_normal((n, dim))
    fired, post = np.zeros(n, dtype=bool), np.zeros(n)
    impls = {
        "update/numpy": lambda: kernels._update_np(W.copy(), W_hat, g.indptr, g.indices, 0.1, 0.01, G),
        "trigger/numpy": lambda: kernels._trigger_np(W, W_hat.copy(), 1.0, False, fired, post),
    }
    if USE_NUMBA:
        impls["update/numba"] = lambda: kernels._update_nb(W.copy(), W_hat, g.indptr, g.indices, 0.1, 0.01, G)
        impls["trigger/numba"] = lambda: kernels._trigger_nb(W, W_hat.copy(), 1.0, False, fired, post)
    out = {}
    for name, fn in impls.items():
        fn()
        out[name] = min(timeit.repeat(fn, number=repeat, repeat=5)) / repeat * 1e6
    return out


def bench_end_to_end(preset, rounds):
    out = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, DETSGRAD_BACKEND=backend)
        r = subprocess.run([sys.executable, "-c", E2E.format(preset=preset, rounds=rounds)],
                           env=env, capture_output=True, text=True, check=True)
        out[backend] = json.loads(r.stdout)["seconds"]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--agents", type=int, default=10)
    ap.add_argument("--dim", type=int, default=52650, help="parameter count (default: 784-64-32-10 MLP)")
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--rounds", type=int, default=2000)
    args = ap.parse_args()

    print(f"kernels, {args.agents} agents x {args.dim} parameters (microseconds per call)")
    for name, us in sorted(bench_kernels(args.agents, args.dim, args.repeat).items()):
        print(f"  {name:16s} {us:10.1f}")
    for preset in ("desk-quartic-detsgrad", "desk-digits-detsgrad-s"):
        t = bench_end_to_end(preset, args.rounds)
        print(f"{preset}, {args.rounds} rounds: numba {t['numba']:.2f}s, numpy {t['numpy']:.2f}s "
              f"(x{t['numpy'] / t['numba']:.2f})")


if __name__ == "__main__":
    main()
