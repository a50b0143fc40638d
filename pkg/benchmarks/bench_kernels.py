"""Compare the numba and pure-numpy kernel backends.

Kernel timings call both implementations directly on the same inputs.  The
end-to-end timing runs a perturbation rollout in a child process per
backend, since the backend is fixed at import time.

    python benchmarks/bench_kernels.py [--vehicles 12] [--repeat 2000]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from bilateral_cf.kernels import _jit, _vec

ROLLOUT = """
import json, time
from bilateral_cf import presets, kernels
from bilateral_cf.sim import rollout
sc, _ = presets.build("perturbation", "bcm", steps=%d)
rollout(sc, max_steps=5)  # warm-up (jit compile)
t0 = time.perf_counter(); rollout(sc); dt = time.perf_counter() - t0
print(json.dumps({"backend": kernels.BACKEND, "seconds": dt}))
"""


def _inputs(n, rng):
    odo = np.cumsum(rng.uniform(20.0, 40.0, n))[::-1].copy()
    length = np.full(n, 5.0)
    speed = rng.uniform(10.0, 25.0, n)
    accel = rng.uniform(-3.0, 3.0, n)
    front, back = _vec.gaps(odo, length, 0.0)
    return odo, length, speed, accel, front, back


def kernel_calls(mod, n, rng):
    odo, length, speed, accel, front, back = _inputs(n, rng)
    v_lead = np.roll(speed, 1)
    v_follow = np.roll(speed, -1)
    return {
        "gaps": lambda: mod.gaps(odo, length, 0.0),
        "integrate": lambda: mod.integrate(odo, speed, accel, 0.1),
        "idm_accel": lambda: mod.idm_accel(speed, front, v_lead, 30.0, 1.4, 2.0, 1.26, 2.0, 4.0),
        "gipps_accel": lambda: mod.gipps_accel(speed, front, v_lead, 30.0, 3.0, 3.0, 1.0, 0.1),
        "bcm_accel": lambda: mod.bcm_accel(front, back, v_lead, speed, v_follow, 0.5, 1.0, 1.26),
    }


def bench_kernels(n, repeat):
    rows = []
    jit = kernel_calls(_jit, n, np.random.default_rng(0))
    vec = kernel_calls(_vec, n, np.random.default_rng(0))
    for name in jit:
        jit[name]()  # compile
        t_jit = min(timeit.repeat(jit[name], number=repeat, repeat=3)) / repeat
        t_vec = min(timeit.repeat(vec[name], number=repeat, repeat=3)) / repeat
        rows.append((name, t_jit * 1e6, t_vec * 1e6))
    return rows


def bench_rollout(steps):
    out = {}
    for disable in ("0", "1"):
        env = dict(os.environ, BILATERAL_CF_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", ROLLOUT % steps], env=env,
                             capture_output=True, text=True, check=True)
        rec = json.loads(res.stdout.strip().splitlines()[-1])
        out[rec["backend"]] = rec["seconds"]
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vehicles", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=3600)
    args = ap.parse_args()

    print(f"kernels, {args.vehicles} vehicles (us per call)")
    print(f"{'kernel':<12} {'numba':>9} {'numpy':>9} {'speedup':>8}")
    for name, tj, tv in bench_kernels(args.vehicles, args.repeat):
        print(f"{name:<12} {tj:9.2f} {tv:9.2f} {tv / tj:8.1f}x")

    r = bench_rollout(args.steps)
    print(f"\nperturbation rollout, {args.steps} steps (s)")
    for backend, sec in sorted(r.items()):
        print(f"{backend:<12} {sec:9.3f}")


if __name__ == "__main__":
    main()
