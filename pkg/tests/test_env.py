from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from grdesign.env import (
    CostVector,
    GenerationConfig,
    GenerationExhausted,
    GridEnvironment,
    InvalidModification,
    Modification,
    PreconditionError,
    apply,
    apply_all,
    candidate_modifications,
    cost,
    is_valid,
    load_environment,
    random_environment,
    reachable_set,
    save_environment,
    validate,
)

from helpers import grid, sample_envs


def empty6():
    return GridEnvironment(6, 6, (0, 0), ((5, 4), (5, 5)))


def test_empty_grid_is_valid():
    assert validate(empty6()).ok


def test_walled_goal_reports_unreachable():
    env = GridEnvironment(6, 6, (0, 0), ((5, 4), (0, 5)), frozenset({(1, 5), (0, 4)}))
    report = validate(env)
    assert not report.ok
    assert ("goal unreachable", (0, 5)) in [(v.kind, v.cell) for v in report.violations]


def test_blocked_start_reported():
    env = GridEnvironment(6, 6, (0, 0), ((5, 4), (5, 5)), frozenset({(0, 0)}))
    assert "start blocked" in validate(env).kinds()


def test_other_goal_counts_as_wall():
    # goal 0 sits in the only corridor to goal 1
    env = grid(["S01", "xxx"])
    kinds = validate(env).kinds()
    assert "goal unreachable" in kinds


def test_subgoal_reward_bound():
    env = GridEnvironment(4, 4, (0, 0), ((0, 3), (3, 3)), subgoal_rewards=(((1, 1), 0.2),), goal_reward=1.0)
    assert "subgoal reward too large" in validate(env).kinds()


def test_reachable_set_empty_3x3():
    env = GridEnvironment(3, 3, (0, 0), ((0, 2), (2, 2)))
    assert reachable_set(env, (1, 1)) == {(r, c) for r in range(3) for c in range(3)}


def test_reachable_set_wall_split():
    env = GridEnvironment(3, 3, (0, 0), ((0, 2), (2, 2)), frozenset({(0, 1), (1, 1), (2, 1)}))
    assert reachable_set(env, (0, 0)) == {(0, 0), (1, 0), (2, 0)}


def test_reachable_set_bad_source():
    env = GridEnvironment(3, 3, (0, 0), ((0, 2), (2, 2)), frozenset({(1, 1)}))
    with pytest.raises(PreconditionError):
        reachable_set(env, (1, 1))
    with pytest.raises(PreconditionError):
        reachable_set(env, (5, 5))


def _flood(env, source):
    # recursive flood fill written independently of reachable_set
    seen = set()

    def visit(cell):
        r, c = cell
        if cell in seen or not (0 <= r < env.height and 0 <= c < env.width) or cell in env.blocked:
            return
        seen.add(cell)
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            visit((r + d[0], c + d[1]))

    visit(source)
    return seen


def test_reachable_set_matches_flood_fill():
    for env in sample_envs(1000, seed=7):
        assert reachable_set(env, env.start) == _flood(env, env.start)


def test_apply_block_and_round_trip():
    env = empty6()
    blocked = apply(env, Modification.block((2, 2)))
    assert blocked.blocked == {(2, 2)}
    assert env.blocked == frozenset()
    walled = GridEnvironment(6, 6, (0, 0), ((5, 4), (5, 5)), frozenset({(2, 2)}))
    assert apply_all(walled, [Modification.unblock((2, 2)), Modification.block((2, 2))]) == walled


@pytest.mark.parametrize("mod", [
    Modification.block((5, 5)),
    Modification.block((0, 0)),
    Modification.unblock((3, 3)),
])
def test_apply_rejects_illegal(mod):
    with pytest.raises(InvalidModification):
        apply(empty6(), mod)


def test_apply_block_on_blocked():
    env = apply(empty6(), Modification.block((1, 1)))
    with pytest.raises(InvalidModification):
        apply(env, Modification.block((1, 1)))


def test_cost_examples():
    env = GridEnvironment(6, 6, (0, 0), ((5, 4), (5, 5)), frozenset({(3, 3)}))
    assert cost(env, env) == CostVector(0, 0)
    one = apply(env, Modification.block((1, 1)))
    assert cost(env, one) == CostVector(1, 0)
    both = apply(one, Modification.unblock((3, 3)))
    assert cost(env, both) == CostVector(1, 1)


def test_cost_geometry_mismatch():
    with pytest.raises(PreconditionError):
        cost(empty6(), GridEnvironment(5, 6, (0, 0), ((5, 3), (5, 4))))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_single_modification_costs_one(seed):
    env = random_environment(GenerationConfig(5, 5, seed=seed))
    before = env.to_json()
    for mod in candidate_modifications(env):
        assert cost(env, apply(env, mod)).total == 1
    assert env.to_json() == before


def test_candidate_order_is_lexicographic():
    env = GridEnvironment(3, 3, (0, 0), ((0, 2), (2, 2)), frozenset({(1, 1)}))
    mods = candidate_modifications(env)
    assert [m.sort_key() for m in mods] == sorted(m.sort_key() for m in mods)
    assert Modification.unblock((1, 1)) in mods


def test_json_round_trip(tmp_path):
    env = GridEnvironment(4, 4, (1, 0), ((0, 3), (3, 3)), frozenset({(1, 1)}), (((2, 2), 0.1),), 1.0)
    data = json.loads(env.to_json())
    assert data["start"] == [1, 0] and data["subgoal_rewards"] == [[2, 2, 0.1]]
    path = tmp_path / "env.json"
    save_environment(env, path)
    assert load_environment(path) == env


def test_generation_paper_range():
    cfg = GenerationConfig(6, 6, max_blocked=12)
    rng = np.random.default_rng(0)
    for _ in range(300):
        env = random_environment(cfg, rng)
        assert 0 <= len(env.blocked) <= 12
        assert is_valid(env)
        assert env.start[1] == 0
        assert all(g[1] in (4, 5) for g in env.goals)


def test_generation_zero_blocked():
    cfg = GenerationConfig(6, 6, max_blocked=0)
    assert all(not e.blocked for e in random_environments_of(cfg, 50))


def random_environments_of(cfg, n):
    rng = np.random.default_rng(cfg.seed)
    return [random_environment(cfg, rng) for _ in range(n)]


def test_generation_deterministic():
    cfg = GenerationConfig(6, 6, seed=99)
    assert random_environment(cfg) == random_environment(cfg)


def test_blocked_count_uniform():
    cfg = GenerationConfig(6, 6)
    rng = np.random.default_rng(2024)
    counts = np.bincount([len(random_environment(cfg, rng).blocked) for _ in range(10_000)], minlength=13)
    assert len(counts) == 13
    assert chisquare(counts).pvalue > 0.01


def test_generation_exhausted():
    # on a 3x1 strip the nearer goal always walls off the farther one
    with pytest.raises(GenerationExhausted):
        random_environment(GenerationConfig(3, 1, max_blocked=0, seed=0))


def test_generation_config_bound():
    with pytest.raises(PreconditionError):
        GenerationConfig(3, 3, max_blocked=7).check()


def test_subgoal_generation():
    env = random_environment(GenerationConfig(6, 6, subgoal_count=4, seed=3))
    values = [v for _, v in env.subgoal_rewards]
    assert len(values) == 4
    assert all(0.05 <= v <= 0.3 for v in values)
    assert env.goal_reward == pytest.approx(10 * max(values))
    assert is_valid(env)
