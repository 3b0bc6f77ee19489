from __future__ import annotations

import math

import numpy as np
import pytest

from grdesign.agents import (
    OPTIMAL,
    Action,
    CapExceeded,
    Geometric,
    Hyperbolic,
    LearnedPolicy,
    NonTerminating,
    Planner,
    Trajectory,
    Unreachable,
    action_likelihood,
    check_trajectory,
    clone_policy,
    discount_weight,
    parse_discount,
    plan_trajectory,
    planned_value,
    policy_features,
    policy_input_shape,
    step,
    trajectory_return,
)
from grdesign.env import GridEnvironment, reachable_set
from grdesign.nn import EmptyDataset, Network, NetworkSpec, TrainConfig

from helpers import grid, sample_envs


def test_discount_weights():
    assert discount_weight(Geometric(0.9), 2) == pytest.approx(0.81)
    assert discount_weight(Hyperbolic(8), 1) == pytest.approx(1 / 9)
    assert all(discount_weight(Hyperbolic(0), t) == 1.0 for t in range(20))
    assert discount_weight(Geometric(0.3), 0) == discount_weight(Hyperbolic(5), 0) == 1.0


@pytest.mark.parametrize("bad", [lambda: Geometric(0.0), lambda: Geometric(1.5), lambda: Hyperbolic(-1)])
def test_discount_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_parse_discount():
    assert parse_discount("optimal") == Geometric(1.0)
    assert parse_discount("geometric:0.9") == Geometric(0.9)
    assert parse_discount("hyperbolic:8") == Hyperbolic(8.0)
    with pytest.raises(ValueError):
        parse_discount("exponential:2")


def test_straight_shortest_path():
    env = GridEnvironment(6, 6, (0, 0), ((0, 5), (5, 5)))
    traj = plan_trajectory(env, OPTIMAL, (0, 5))
    assert traj.action_string() == "RRRRR"
    assert check_trajectory(env, traj) == []


def test_tie_break_prefers_up_down_first():
    env = GridEnvironment(4, 4, (0, 0), ((0, 3), (3, 3)))
    assert plan_trajectory(env, OPTIMAL, (3, 3)).action_string() == "DDDRRR"


def _bfs_len(env, goal):
    walls = env.blocked | set(env.other_goals(goal))
    dist, frontier = {env.start: 0}, [env.start]
    while frontier:
        nxt = []
        for cell in frontier:
            for n in env.neighbors(cell):
                if n not in walls and n not in dist:
                    dist[n] = dist[cell] + 1
                    nxt.append(n)
        frontier = nxt
    return dist[goal]


def test_optimal_path_length_is_bfs_distance():
    for env in sample_envs(300, seed=5):
        for g in env.goals:
            traj = plan_trajectory(env, OPTIMAL, g)
            assert len(traj) == _bfs_len(env, g)
            assert check_trajectory(env, traj) == []


def test_hyperbolic_zero_equals_undiscounted_with_subgoals():
    for env in sample_envs(60, seed=8, subgoal_count=3):
        for g in env.goals:
            a = plan_trajectory(env, Planner(Hyperbolic(0.0)), g)
            b = plan_trajectory(env, Planner(Geometric(1.0)), g)
            assert a == b


def _best_simple_path(env, goal, discount, horizon):
    """Exhaustive search over simple paths; returns (value, arrival, actions)."""
    walls = env.blocked | set(env.other_goals(goal))
    best = (-math.inf, 0, ())

    def walk(cell, seen, actions):
        nonlocal best
        if len(actions) > horizon:
            return
        if cell == goal:
            value = trajectory_return(env, discount, Trajectory.from_actions(env.start, goal, actions))
            if value > best[0] + 1e-12 or (abs(value - best[0]) <= 1e-12 and len(actions) < best[1]):
                best = (value, len(actions), tuple(actions))
            return
        for a in Action:
            n = step(cell, a)
            if env.in_bounds(n) and n not in walls and n not in seen:
                walk(n, seen | {n}, actions + [int(a)])

    walk(env.start, {env.start}, [])
    return best


def _detour_env():
    return grid(["S..0", "....", "....", "...1"], goal_reward=3.0, subgoals=[((1, 1), 0.3)])


def test_detour_taken_only_when_worth_it():
    env = _detour_env()
    patient = Planner(Hyperbolic(0.05))
    impatient = Planner(Hyperbolic(8.0))
    detour = plan_trajectory(env, patient, (0, 3))
    direct = plan_trajectory(env, impatient, (0, 3))
    assert (1, 1) in detour.cells and len(detour) == 5
    assert direct.action_string() == "RRR"
    for planner, traj in ((patient, detour), (impatient, direct)):
        value, _, actions = _best_simple_path(env, (0, 3), planner.discount, 32)
        assert planned_value(env, planner, (0, 3)) == pytest.approx(value)
        assert trajectory_return(env, planner.discount, traj) == pytest.approx(value)


def test_dp_dominates_simple_paths_on_random_4x4():
    rng = np.random.default_rng(3)
    envs = sample_envs(25, size=4, seed=12, subgoal_count=2, max_blocked=4)
    for env in envs:
        planner = Planner(Hyperbolic(float(rng.uniform(0, 10))))
        for g in env.goals:
            traj = plan_trajectory(env, planner, g)
            got = trajectory_return(env, planner.discount, traj)
            assert got == pytest.approx(planned_value(env, planner, g))
            best, _, _ = _best_simple_path(env, g, planner.discount, planner.horizon_for(env))
            assert got >= best - 1e-9


def test_planner_is_deterministic():
    env = sample_envs(1, seed=2, subgoal_count=3)[0]
    p = Planner(Hyperbolic(8.0))
    assert plan_trajectory(env, p, env.goals[0]) == plan_trajectory(env, p, env.goals[0])


def test_unreachable_and_cap():
    env = GridEnvironment(4, 4, (0, 0), ((0, 3), (3, 3)), frozenset({(0, 2), (1, 2), (1, 3)}))
    with pytest.raises(Unreachable):
        plan_trajectory(env, OPTIMAL, (0, 3))
    subs = tuple(((r, c), 0.05) for r in range(4) for c in range(1, 5) if (r, c) not in ((0, 4), (3, 4)))[:13]
    crowded = GridEnvironment(5, 4, (0, 0), ((0, 4), (3, 4)), subgoal_rewards=subs, goal_reward=1.0)
    with pytest.raises(CapExceeded):
        plan_trajectory(crowded, Planner(Hyperbolic(1.0)), (0, 4))


def test_horizon_too_short():
    env = GridEnvironment(4, 4, (0, 0), ((0, 3), (3, 3)))
    with pytest.raises(ValueError):
        plan_trajectory(env, Planner(horizon=3), (3, 3))


def test_smoothed_likelihood():
    env = GridEnvironment(4, 4, (3, 0), ((0, 0), (3, 3)))
    lik = action_likelihood(OPTIMAL, env, (0, 0), (3, 0))
    assert lik[Action.UP] == pytest.approx(0.9625)
    assert all(lik[a] == pytest.approx(0.0125) for a in (Action.DOWN, Action.LEFT, Action.RIGHT))
    hard = action_likelihood(Planner(epsilon=0.0), env, (0, 0), (3, 0))
    assert hard[Action.UP] == 1.0 and sum(hard.values()) == 1.0


def _zero_policy(env):
    layers = [{"type": "flatten"}, {"type": "dense", "out_dim": 4}]
    net = Network(NetworkSpec(policy_input_shape(env), layers))
    net.set_flat(np.zeros(net.n_params()))
    return LearnedPolicy(net)


def test_uniform_learned_likelihood():
    env = GridEnvironment(4, 4, (0, 0), ((0, 3), (3, 3)))
    lik = action_likelihood(_zero_policy(env), env, (0, 3), (1, 1))
    assert all(v == pytest.approx(0.25) for v in lik.values())


def test_likelihoods_normalized():
    for env in sample_envs(20, seed=4, subgoal_count=2):
        for agent in (OPTIMAL, Planner(Hyperbolic(8.0))):
            for cell in list(reachable_set(env, env.start))[:10]:
                lik = action_likelihood(agent, env, env.goals[0], cell)
                assert sum(lik.values()) == pytest.approx(1.0, abs=1e-9)
                assert min(lik.values()) >= 0


def test_learned_rollout_non_terminating():
    env = GridEnvironment(4, 4, (0, 0), ((0, 3), (3, 3)))
    agent = _zero_policy(env)
    agent.net.params()[-1].value[:] = [0.0, 0.0, 5.0, 0.0]  # always prefer Left
    with pytest.raises(NonTerminating):
        plan_trajectory(env, agent, (0, 3))


def _teacher_pairs(planner, count, seed, **kw):
    envs = sample_envs(count, seed=seed, **kw)
    return [(e, plan_trajectory(e, planner, e.goals[i % 2])) for i, e in enumerate(envs)]


def test_clone_empty():
    with pytest.raises(EmptyDataset):
        clone_policy([])


def test_clone_single_trajectory_smoke():
    pairs = _teacher_pairs(OPTIMAL, 1, seed=1)
    result = clone_policy(pairs, TrainConfig(epochs=1, loss="cross_entropy"))
    assert math.isfinite(result.report.train_loss[-1])


def test_clone_optimal_teacher_is_near_exact():
    pairs = _teacher_pairs(OPTIMAL, 1000, seed=21)
    result = clone_policy(pairs, TrainConfig(epochs=20, loss="cross_entropy", seed=0))
    assert result.heldout_accuracy >= 0.95
    # rollouts of the clone reproduce the teacher's whole trajectory
    same = 0
    for env, traj in pairs[:50]:
        try:
            same += plan_trajectory(env, result.agent, traj.goal) == traj
        except NonTerminating:
            pass
    assert same >= 40


def test_policy_features_are_agent_centred():
    env = grid([
        "S.x0",
        "....",
        "...1",
    ])
    x = policy_features(env, (1, 1), (0, 3))
    g = len(env.goals)
    assert x.shape == policy_input_shape(env) == (7 + g, 5, 7)
    centre = (2, 3)
    assert x[3 + g][centre] == 1.0 and x[3 + g].sum() == 1.0
    assert x[0][centre[0] - 1, centre[1] + 1] == 1.0  # the block at (0, 2)
    assert x[0][0, 0] == 1.0 and x[6 + g][0, 0] == 0.0  # outside the grid
    assert x[6 + g].sum() == env.width * env.height
    assert x[5 + g][centre] == pytest.approx(1 / 4)  # three steps from (1,1) to (0,3)
    assert x[5 + g][centre[0] + 1, centre[1] + 2] == 0.0  # the other goal is blocked
