"""Compare the numba and numpy kernel paths.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Kernel timings call both implementations directly in one process. The episode
timing runs a full expert episode in a child process per backend, since the
backend is chosen once at import from SPEEDBENCH_DISABLE_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from speedbench import kernels
from speedbench.config import Difficulty, generate_config

EPISODE = """
import time
from speedbench.config import Difficulty, generate_config
from speedbench.expert import ExpertPolicy
from speedbench.metrics import score_log
from speedbench.sim import run_episode
cfg = generate_config(Difficulty.MEDIUM, 0, 7)
run_episode(cfg, ExpertPolicy())  # warm-up, includes any JIT load
t = time.perf_counter()
for _ in range({n}):
    score_log(run_episode(cfg, ExpertPolicy()).log, cfg)
print((time.perf_counter() - t) / {n})
"""


def best(fn, repeat):
    fn()  # warm-up / compile
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--episodes", type=int, default=3)
    args = ap.parse_args(argv)
    if not kernels.HAS_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    route = generate_config(Difficulty.EASY, 0, 1).route
    rng = np.random.default_rng(0)
    pts = route.keypoints[rng.integers(0, len(route), 1500)] + rng.normal(0, 1.0, (1500, 2))
    trace = np.abs(np.cumsum(rng.normal(0, 0.3, 20000)))
    cases = [
        (f"project_points  ({len(pts)} pts x {len(route)} kp)",
         lambda: kernels.project_points_np(pts, route.keypoints, route.seg_len, route.cum_dist),
         lambda: kernels.project_points_nb(pts, route.keypoints, route.seg_len, route.cum_dist)),
        (f"nearest_keypoint ({len(pts)} pts x {len(route)} kp)",
         lambda: kernels.nearest_keypoint_np(pts, route.keypoints),
         lambda: kernels.nearest_keypoint_nb(pts, route.keypoints)),
        (f"tendency        ({len(trace)} frames, F=40)",
         lambda: kernels.tendency_np(trace, 40),
         lambda: kernels.tendency_nb(trace, 40)),
    ]
    print(f"{'kernel':<46}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, f_np, f_nb in cases:
        a, b = best(f_np, args.repeat), best(f_nb, args.repeat)
        print(f"{name:<46}{a * 1e3:>10.2f}{b * 1e3:>10.2f}{a / b:>8.1f}x")

    per = {}
    for label, flag in (("numpy", "1"), ("numba", "0")):
        env = dict(os.environ, SPEEDBENCH_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", EPISODE.format(n=args.episodes)], env=env, capture_output=True, text=True, check=True)
        per[label] = float(out.stdout.strip())
    print(f"{'expert episode + scoring (medium route)':<46}{per['numpy'] * 1e3:>10.1f}{per['numba'] * 1e3:>10.1f}{per['numpy'] / per['numba']:>8.1f}x")


if __name__ == "__main__":
    main()
