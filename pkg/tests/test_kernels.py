from __future__ import annotations

import numpy as np
import pytest

from grdesign import kernels
from grdesign.agents import Hyperbolic, discount_table, planning_grid
from grdesign.kernels import _pykernels as py

from helpers import sample_envs

ck = pytest.importorskip("grdesign.kernels._ckernels")


def _flat(env, cell):
    return cell[0] * env.width + cell[1]


def test_backend_selection_reports_name():
    assert kernels.BACKEND_NAME in ("cython", "python")
    assert kernels.python_backend is py


def test_bfs_and_paths_agree():
    for env in sample_envs(150, size=7, seed=31):
        free = env.free_mask().astype(np.uint8).ravel()
        src = _flat(env, env.start)
        assert np.array_equal(ck.bfs(free, env.height, env.width, src), py.bfs(free, env.height, env.width, src))
        goals = np.array([_flat(env, g) for g in env.goals], dtype=np.int32)
        assert tuple(ck.worstcase_wcd(free, env.height, env.width, src, goals)) == tuple(
            py.worstcase_wcd(free, env.height, env.width, src, goals)
        )
        for g in env.goals:
            grid = planning_grid(env, g)
            a = ck.shortest_path_actions(grid, env.height, env.width, src, _flat(env, g))
            b = py.shortest_path_actions(grid, env.height, env.width, src, _flat(env, g))
            assert list(a) == list(b)


def test_plan_policy_agrees():
    for env in sample_envs(25, size=5, seed=32, subgoal_count=3):
        horizon = 4 * (env.width + env.height)
        sub_bit = np.full(env.width * env.height, -1, dtype=np.int32)
        for i, (cell, _) in enumerate(env.subgoal_rewards):
            sub_bit[_flat(env, cell)] = i
        rewards = np.array([v for _, v in env.subgoal_rewards])
        disc = discount_table(Hyperbolic(8.0), horizon)
        g = env.goals[0]
        args = (planning_grid(env, g), env.height, env.width, _flat(env, g), sub_bit, rewards,
                float(env.goal_reward), disc, horizon)
        pc, vc, ac = ck.plan_policy(*args)
        pp, vp, ap = py.plan_policy(*args)
        assert np.array_equal(np.asarray(pc), np.asarray(pp))
        assert np.allclose(np.asarray(vc), np.asarray(vp))
        assert np.array_equal(np.asarray(ac), np.asarray(ap))


def test_unreachable_goal_signals_minus_one():
    free = np.ones(9, dtype=np.uint8)
    free[[1, 4, 7]] = 0
    goals = np.array([2, 8], dtype=np.int32)
    assert ck.worstcase_wcd(free, 3, 3, 0, goals)[0] == -1
    assert py.worstcase_wcd(free, 3, 3, 0, goals)[0] == -1
    assert ck.shortest_path_actions(free, 3, 3, 0, 2) is None
