"""Compiled vs interpreted timing of the hot kernels.

The interpreted numbers come from a child process started with
BATREG_DISABLE_JIT=1, so every kernel (including the helpers it calls) runs
as plain Python. Usage:

    python3 benchmarks/bench_kernels.py [--steps 20000] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _timed(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def measure(steps, repeat):
    from batreg import _kernels as k
    from batreg._jit import HAS_NUMBA
    from batreg.core import BatteryParams, MarketPrices
    from batreg.cost import PowerLawStress
    from batreg.offline import OracleConfig, brute_force_offline
    from batreg.policy import compute_u_hat
    from batreg.sim import generate_trace

    p = BatteryParams.with_round_trip(0.85)
    m = MarketPrices(80.0, 20.0)
    phi = PowerLawStress()
    band = compute_u_hat(m, p, phi) * p.E
    r = generate_trace(7, steps, p.P, p.T).r
    e0 = 0.5 * (p.e_min + p.e_max)

    def controller():
        k.run_controller(r, e0, band, p.e_min, p.e_max, p.T, p.eta_c, p.eta_d, p.E, 1e-12, False)

    prof = np.cumsum(np.random.default_rng(3).uniform(-0.05, 0.05, steps))

    def rainflow():
        k.rainflow_batch(k.extract_extrema(prof, 1e-12))

    short = generate_trace(11, 5, p.P, p.T)

    def oracle():
        brute_force_offline(short, p, phi, m, e0, OracleConfig(5))

    cases = {"run_controller": controller, "rainflow": rainflow, "offline_search_N5_K5": oracle}
    # first call compiles (or loads the cache); keep it out of the timing
    for fn in cases.values():
        fn()
    return {"jit": HAS_NUMBA, "times": {name: _timed(fn, repeat) for name, fn in cases.items()}}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.steps, args.repeat)))
        return
    compiled = measure(args.steps, args.repeat)
    env = dict(os.environ, BATREG_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, __file__, "--child", "--steps", str(args.steps),
                          "--repeat", str(args.repeat)],
                         env=env, check=True, capture_output=True, text=True).stdout
    plain = json.loads(out)
    if not compiled["jit"]:
        print("numba unavailable: both columns are interpreted")
    print(f"{'kernel':<24}{'numba [s]':>12}{'python [s]':>12}{'speedup':>10}")
    for name, t in compiled["times"].items():
        tp = plain["times"][name]
        print(f"{name:<24}{t:>12.5f}{tp:>12.5f}{tp / t:>10.1f}")


if __name__ == "__main__":
    main()
