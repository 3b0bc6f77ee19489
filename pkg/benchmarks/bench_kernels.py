"""Compare the compiled grid kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--sizes 6 13] [--envs 20] [--repeats 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from grdesign.agents import Hyperbolic, discount_table, planning_grid
from grdesign.env import GenerationConfig, random_environments
from grdesign.kernels import compiled_backend, python_backend


def kernel_calls(env, backend):
    """One call per kernel on ``env``, as zero-argument closures."""
    h, w = env.height, env.width
    start = env.start[0] * w + env.start[1]
    goals = np.array([g[0] * w + g[1] for g in env.goals], dtype=np.int32)
    free_all = env.free_mask().astype(np.uint8).ravel()
    free_g = planning_grid(env, env.goals[0])
    sub_bit = np.full(h * w, -1, dtype=np.int32)
    for i, (cell, _) in enumerate(env.subgoal_rewards):
        sub_bit[cell[0] * w + cell[1]] = i
    rewards = np.array([v for _, v in env.subgoal_rewards], dtype=np.float64)
    horizon = 2 * (h + w)
    discounts = discount_table(Hyperbolic(8.0), horizon)
    return {
        "bfs": lambda: backend.bfs(free_g, h, w, start),
        "worstcase_wcd": lambda: backend.worstcase_wcd(free_all, h, w, start, goals),
        "shortest_path_actions": lambda: backend.shortest_path_actions(free_g, h, w, start, goals[0]),
        "plan_policy": lambda: backend.plan_policy(
            free_g, h, w, goals[0], sub_bit, rewards, float(env.goal_reward), discounts, horizon
        ),
    }


def best_time(envs, backend, name, repeats):
    calls = [kernel_calls(env, backend)[name] for env in envs]
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        for call in calls:
            call()
        best = min(best, time.perf_counter() - started)
    return best / len(envs)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[6, 13])
    parser.add_argument("--envs", type=int, default=20)
    parser.add_argument("--subgoals", type=int, default=3)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if compiled_backend is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    print(f"{'kernel':<24}{'size':>6}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for size in args.sizes:
        gen = GenerationConfig(size, size, subgoal_count=args.subgoals, seed=args.seed)
        envs = random_environments(gen, args.envs)
        for name in ("bfs", "worstcase_wcd", "shortest_path_actions", "plan_policy"):
            py = best_time(envs, python_backend, name, args.repeats)
            cy = best_time(envs, compiled_backend, name, args.repeats)
            print(f"{name:<24}{size:>6}{py * 1e6:>14.1f}{cy * 1e6:>14.1f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
