"""Compare the numba kernels with their numpy twins.

Each backend runs in its own subprocess because ``GSCIOC_DISABLE_NUMBA`` is
read at import time.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up (includes JIT compilation)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def worker(repeat):
    from gscioc import _accel
    from gscioc.experiments import demonstrations
    from gscioc.inference import Demonstration, log_likelihood
    from gscioc.scenarios import build_group_goal_scenario, build_zebra_scenario
    from gscioc.softvi import GridSpec, soft_vi_solve, tabular_rollout

    out = {"numba": _accel.USE_NUMBA}

    cfg = build_group_goal_scenario()
    demo = Demonstration(demonstrations(cfg, 2000, 0).trajectories, cfg)
    theta = np.array([0.3, 0.9, 2.5])
    out["likelihood (2000 demos, T=14)"] = _best(lambda: log_likelihood(theta, demo), repeat)

    z = build_zebra_scenario(False)
    ri, rj = z.rewards()
    grid = GridSpec.default_for(z.dims, z.x0, state_bins=61, action_bins=21)
    out["soft VI (61x61 states, 21 actions, T=12)"] = _best(lambda: soft_vi_solve(ri, rj, z.dynamics, grid, z.T), max(1, repeat // 2))
    res = soft_vi_solve(ri, rj, z.dynamics, grid, z.T)
    out["tabular roll-out (2000 x 12)"] = _best(lambda: tabular_rollout(res, z.dynamics, z.x0, 2000, 0), repeat)
    print(json.dumps(out))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeat)
        return
    results = {}
    for name, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, GSCIOC_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(args.repeat)], env=env, capture_output=True, text=True, check=True)
        results[name] = json.loads(proc.stdout.strip().splitlines()[-1])
    if not results["numba"].pop("numba"):
        print("note: numba is not installed; both columns use numpy")
    results["numpy"].pop("numba")
    print(f"{'kernel':45s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speed-up':>9s}")
    for key in results["numpy"]:
        a, b = results["numba"][key], results["numpy"][key]
        print(f"{key:45s} {a:10.4f} {b:10.4f} {b / a:9.1f}")


if __name__ == "__main__":
    main()
