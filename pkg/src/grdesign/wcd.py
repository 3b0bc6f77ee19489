"""Worst-case distinctiveness (wcd).

Two notions are provided. :func:`wcd_deterministic` plans one trajectory per
goal and measures the longest shared action prefix. :func:`wcd_optimal_worstcase`
maximises that prefix over every choice of shortest paths, via a longest-path
sweep over the intersection of two shortest-path DAGs.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from . import kernels
from .agents import (
    OPTIMAL,
    Action,
    AgentModel,
    Trajectory,
    Unreachable,
    is_shortest_path_agent,
    plan_trajectory,
    planning_grid,
    step,
)
from .env import Cell, GridEnvironment, PreconditionError

BRUTE_FORCE_PATH_CAP = 10_000


class TooLarge(Exception):
    pass


@dataclass(frozen=True)
class WcdResult:
    value: int
    witness: tuple[Trajectory, Trajectory]
    goal_pair: tuple[Cell, Cell]

    def __int__(self) -> int:
        return self.value


def common_prefix_length(a: Trajectory | Sequence, b: Trajectory | Sequence) -> int:
    if isinstance(a, Trajectory) and isinstance(b, Trajectory):
        if a.steps and b.steps and a.steps[0][0] != b.steps[0][0]:
            raise PreconditionError("trajectories start at different cells")
        a, b = a.actions, b.actions
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def wcd_deterministic(env: GridEnvironment, agent: AgentModel = OPTIMAL) -> WcdResult:
    plans = {g: plan_trajectory(env, agent, g) for g in env.goals}
    best = None
    for gi, gj in combinations(env.goals, 2):
        v = common_prefix_length(plans[gi], plans[gj])
        if best is None or v > best[0]:
            best = (v, gi, gj)
    value, gi, gj = best
    return WcdResult(value, (plans[gi], plans[gj]), (gi, gj))


def _flat_goals(env: GridEnvironment) -> np.ndarray:
    return np.array([g[0] * env.width + g[1] for g in env.goals], dtype=np.int32)


def worstcase_value(env: GridEnvironment) -> int:
    """Value-only fast path of :func:`wcd_optimal_worstcase`; -1 if a goal is unreachable."""
    free = env.free_mask().astype(np.uint8).ravel()
    value, _, _ = kernels.worstcase_wcd(
        free, env.height, env.width, env.start[0] * env.width + env.start[1], _flat_goals(env)
    )
    return int(value)


def wcd_optimal_worstcase(env: GridEnvironment) -> WcdResult:
    free = env.free_mask().astype(np.uint8).ravel()
    start = env.start[0] * env.width + env.start[1]
    value, i, j = kernels.worstcase_wcd(free, env.height, env.width, start, _flat_goals(env))
    if value < 0:
        raise Unreachable("some goal is unreachable from the start")
    gi, gj = env.goals[i], env.goals[j]
    prefix = _shared_prefix(env, gi, gj, int(value))
    witness = tuple(_complete(env, g, prefix) for g in (gi, gj))
    return WcdResult(int(value), witness, (gi, gj))


def _distances(env: GridEnvironment, goal: Cell):
    free = planning_grid(env, goal)
    h, w = env.height, env.width
    ds = kernels.bfs(free, h, w, env.start[0] * w + env.start[1])
    dg = kernels.bfs(free, h, w, goal[0] * w + goal[1])
    return ds.reshape(h, w), dg.reshape(h, w)


def _on_shortest(env, dist, cur: Cell, nxt: Cell, goal: Cell) -> bool:
    ds, dg = dist
    total = ds[goal]
    return env.in_bounds(nxt) and dg[nxt] >= 0 and ds[cur] >= 0 and ds[cur] + 1 + dg[nxt] == total


def _shared_prefix(env: GridEnvironment, gi: Cell, gj: Cell, length: int) -> list[int]:
    """An action sequence of ``length`` that lies on shortest paths to both goals."""
    di, dj = _distances(env, gi), _distances(env, gj)
    # depth-first with a remaining-length check keeps this exact and cheap
    best: list[int] = []

    def extend(cell: Cell, acc: list[int]) -> bool:
        if len(acc) == length:
            best[:] = acc
            return True
        for a in Action:
            nxt = step(cell, a)
            if _on_shortest(env, di, cell, nxt, gi) and _on_shortest(env, dj, cell, nxt, gj):
                if extend(nxt, acc + [int(a)]):
                    return True
        return False

    if not extend(env.start, []):
        raise RuntimeError("could not reconstruct the shared prefix")
    return best


def _complete(env: GridEnvironment, goal: Cell, prefix: list[int]) -> Trajectory:
    dist = _distances(env, goal)
    cell = env.start
    actions = list(prefix)
    for a in prefix:
        cell = step(cell, a)
    _, dg = dist
    while cell != goal:
        for a in Action:
            nxt = step(cell, a)
            if _on_shortest(env, dist, cell, nxt, goal) and dg[nxt] == dg[cell] - 1:
                actions.append(int(a))
                cell = nxt
                break
        else:
            raise RuntimeError("shortest path completion failed")
    return Trajectory.from_actions(env.start, goal, actions)


def all_shortest_paths(env: GridEnvironment, goal: Cell, cap: int = BRUTE_FORCE_PATH_CAP) -> list[tuple[int, ...]]:
    """Every shortest action sequence from the start to ``goal`` (other goals blocked)."""
    walls = env.blocked | set(env.other_goals(goal))
    # plain BFS layering so this stays independent of the compiled kernels
    dist = {goal: 0}
    frontier = [goal]
    while frontier:
        nxt_frontier = []
        for cell in frontier:
            for n in env.neighbors(cell):
                if n not in walls and n not in dist:
                    dist[n] = dist[cell] + 1
                    nxt_frontier.append(n)
        frontier = nxt_frontier
    if env.start not in dist:
        raise Unreachable(f"goal {goal} unreachable")
    paths: list[tuple[int, ...]] = []

    def walk(cell: Cell, acc: tuple[int, ...]):
        if cell == goal:
            paths.append(acc)
            if len(paths) > cap:
                raise TooLarge(f"more than {cap} shortest paths to {goal}")
            return
        for a in Action:
            n = step(cell, a)
            if n in dist and dist[n] == dist[cell] - 1:
                walk(n, acc + (int(a),))

    walk(env.start, ())
    return paths


def brute_force_wcd(env: GridEnvironment, max_size: int = 6) -> WcdResult:
    """Enumerate all shortest paths per goal and take the longest cross-goal common prefix."""
    if env.width > max_size or env.height > max_size:
        raise TooLarge(f"brute force limited to {max_size}x{max_size} grids")
    paths = {g: all_shortest_paths(env, g) for g in env.goals}
    best = None
    for gi, gj in combinations(env.goals, 2):
        for p in paths[gi]:
            for q in paths[gj]:
                v = common_prefix_length(p, q)
                if best is None or v > best[0]:
                    best = (v, gi, gj, p, q)
    value, gi, gj, p, q = best
    witness = (Trajectory.from_actions(env.start, gi, p), Trajectory.from_actions(env.start, gj, q))
    return WcdResult(value, witness, (gi, gj))


def wcd_notion(env: GridEnvironment, agent: AgentModel, notion: str = "auto") -> str:
    if notion == "auto":
        return "worstcase" if is_shortest_path_agent(agent, env) else "deterministic"
    if notion not in ("worstcase", "deterministic"):
        raise ValueError(f"unknown wcd notion {notion!r}")
    return notion


def true_wcd(env: GridEnvironment, agent: AgentModel = OPTIMAL, notion: str = "auto") -> int:
    """Ground-truth wcd value used for labels and by every design method.

    ``auto`` uses the worst case over shortest paths for agents that always
    walk shortest paths, and the planned-trajectory notion otherwise.
    """
    if wcd_notion(env, agent, notion) == "worstcase":
        v = worstcase_value(env)
        if v < 0:
            raise Unreachable("some goal is unreachable from the start")
        return v
    return wcd_deterministic(env, agent).value
