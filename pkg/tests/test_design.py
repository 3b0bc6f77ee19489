from __future__ import annotations

import numpy as np
import pytest

from grdesign.agents import OPTIMAL
from grdesign.design import (
    LAMBDA_GRID,
    BudgetSpec,
    DesignOutcome,
    LagrangianConfig,
    NetSurrogate,
    OracleSurrogate,
    SweepEntry,
    TrueWcd,
    best_within,
    exhaustive_search,
    frontier,
    gradient_optimize,
    greedy,
    lagrangian_value,
    lambda_sweep,
    pruned_reduce,
    shortest_path_cells,
)
from grdesign.env import CostVector, GridEnvironment, Modification, is_valid
from grdesign.nn import Network, ShapeError, wcd_network_spec
from grdesign.wcd import TooLarge, true_wcd

from helpers import grid, sample_envs


def lagrangian(lambdas=(0.0,), budgets=(0.0,), mode="blocking", **kw):
    return LagrangianConfig(tuple(lambdas), budgets=tuple(budgets), mode=mode, **kw)


def test_budget_zero_is_identity(single_block_env):
    for out in (
        exhaustive_search(single_block_env, OPTIMAL, 0),
        pruned_reduce(single_block_env, OPTIMAL, 0),
        greedy(single_block_env, OPTIMAL, 0),
    ):
        assert out.modifications == [] and out.final_env == single_block_env
        assert out.wcd_after == out.wcd_before == 2


def test_single_block_example(single_block_env):
    out = exhaustive_search(single_block_env, OPTIMAL, 1)
    assert out.modifications == [Modification.block((1, 2))]
    assert (out.wcd_before, out.wcd_after, out.reduction) == (2, 0, 2)
    assert out.realized_cost == CostVector(1, 0)
    assert pruned_reduce(single_block_env, OPTIMAL, 1).modifications == out.modifications
    assert greedy(single_block_env, OPTIMAL, 1).modifications == out.modifications


def test_budget_spec():
    assert BudgetSpec.from_ratio(2) == BudgetSpec.individual(10, 2)
    assert BudgetSpec.blocking(3).within(CostVector(3, 0))
    assert not BudgetSpec.blocking(3).within(CostVector(1, 1))
    assert BudgetSpec.shared(3).within(CostVector(1, 2))
    assert not BudgetSpec.individual(1, 1).within(CostVector(2, 0))
    with pytest.raises(ValueError):
        BudgetSpec("blocking", total=-1)
    with pytest.raises(ValueError):
        BudgetSpec("nope")


def test_exhaustive_guard():
    env = sample_envs(1, size=8, seed=70)[0]
    with pytest.raises(TooLarge):
        exhaustive_search(env, OPTIMAL, 6, node_cap=1000)


def test_pruned_matches_exhaustive_with_fewer_nodes():
    envs = sample_envs(40, size=5, seed=71)
    pruned_nodes = exhaustive_nodes = 0
    for env in envs:
        ex = exhaustive_search(env, OPTIMAL, 2)
        pr = pruned_reduce(env, OPTIMAL, 2)
        assert pr.wcd_after == ex.wcd_after
        pruned_nodes += pr.nodes_or_steps
        exhaustive_nodes += ex.nodes_or_steps
    assert pruned_nodes < exhaustive_nodes


def test_shortest_path_cells_corridor():
    env = grid([
        "xxx.0",
        "S...x",
        "xxx.1",
    ])
    assert shortest_path_cells(env) == {(1, 1), (1, 2), (1, 3), (0, 3), (2, 3)}


def test_greedy_budget_one_equals_exhaustive():
    for env in sample_envs(60, size=5, seed=72):
        assert greedy(env, OPTIMAL, 1).wcd_after == exhaustive_search(env, OPTIMAL, 1).wcd_after


def test_greedy_with_oracle_scorer_equals_greedy_true():
    for env in sample_envs(30, size=5, seed=73):
        true = greedy(env, OPTIMAL, 3)
        pred = greedy(env, OPTIMAL, 3, scorer=OracleSurrogate())
        assert pred.method == "greedy-pred" and true.method == "greedy-true"
        assert pred.modifications == true.modifications


def test_shared_budget_never_worse_than_blocking():
    for env in sample_envs(20, size=4, seed=74):
        block = exhaustive_search(env, OPTIMAL, BudgetSpec.blocking(2))
        shared = exhaustive_search(env, OPTIMAL, BudgetSpec.shared(2))
        assert shared.wcd_after <= block.wcd_after
        assert BudgetSpec.shared(2).within(shared.realized_cost)


def test_gradient_with_oracle_applies_best_block(single_block_env):
    out = gradient_optimize(single_block_env, OPTIMAL, OracleSurrogate(), lagrangian())
    assert out.modifications == [Modification.block((1, 2))]
    assert out.wcd_after == 0
    assert out.predicted_trace == [2.0, 0.0]


def test_gradient_large_multiplier_does_nothing(single_block_env):
    out = gradient_optimize(single_block_env, OPTIMAL, OracleSurrogate(), lagrangian((100.0,)))
    assert out.modifications == [] and out.reduction == 0


def test_saturated_environment_is_left_alone():
    env = grid([
        "0...",
        "S...",
        "1...",
    ])
    assert true_wcd(env) == 0
    assert exhaustive_search(env, OPTIMAL, 2).modifications == []
    assert greedy(env, OPTIMAL, 2).modifications == []
    assert gradient_optimize(env, OPTIMAL, OracleSurrogate(), lagrangian()).modifications == []


def test_lagrangian_value_example():
    env0 = grid(["S...", "....", "...0", "...1"])
    env = env0.with_blocked({(0, 1), (1, 1), (1, 2)})
    assert lagrangian_value(env0, env, (0.5,), (1,), 4.5) == pytest.approx(5.5)
    assert lagrangian_value(env0, env, (0.5, 2.0), (3, 0), 4.5, "individual") == pytest.approx(4.5)
    with pytest.raises(ValueError):
        lagrangian_value(env0, env, (0.5,), (1,), 4.5, "individual")


def untrained_surrogate(size=5, seed=0):
    return NetSurrogate(Network(wcd_network_spec(6, size), seed=seed))


def test_sweep_sizes():
    env = sample_envs(1, size=5, seed=75)[0]
    sur = untrained_surrogate()
    entries = lambda_sweep(env, OPTIMAL, sur, lagrangian(budgets=(2,)))
    assert [e.lambdas for e in entries] == [(v,) for v in LAMBDA_GRID]
    grid_small = (0.0, 0.5, 2.0)
    entries = lambda_sweep(env, OPTIMAL, sur, LagrangianConfig((0.0, 0.0), grid_small, (2, 1), mode="individual"))
    assert len(entries) == 9 and len({e.lambdas for e in entries}) == 9


def test_surrogate_shape_mismatch():
    env = sample_envs(1, size=6, seed=76)[0]
    with pytest.raises(ShapeError):
        untrained_surrogate(size=5).value_and_grad(env)


def _fake(reduction, total, lam):
    env = GridEnvironment(2, 2, (0, 0), ((0, 1), (1, 1)))
    out = DesignOutcome("gradient", env, [], CostVector(total, 0), 5, 5 - reduction, 1, 0.0, lambdas=(lam,))
    return SweepEntry((lam,), out)


def test_frontier_and_best_within():
    entries = [_fake(1, 1, 0.5), _fake(2, 1, 0.2), _fake(2, 3, 0.0), _fake(3, 5, 0.0), _fake(0, 0, 7.0)]
    front = frontier(entries)
    assert sorted(front) == [0, 1, 3, 5]
    assert front[1].outcome.reduction == 2
    assert best_within(entries, BudgetSpec.blocking(3)).lambdas == (0.2,)
    assert best_within(entries, BudgetSpec.blocking(2)).outcome.reduction == 2
    assert best_within([_fake(1, 4, 0.0)], BudgetSpec.blocking(2)) is None


@pytest.mark.parametrize("mode", ["blocking", "shared", "individual"])
def test_design_invariants(mode):
    budget = {"blocking": BudgetSpec.blocking(3), "shared": BudgetSpec.shared(3),
              "individual": BudgetSpec.individual(3, 1)}[mode]
    lams = (0.1,) * (2 if mode == "individual" else 1)
    config = LagrangianConfig(lams, budgets=budget.budgets(), max_steps=4, mode=mode)
    scorer = TrueWcd(OPTIMAL)
    for env in sample_envs(8, size=5, seed=77):
        outs = [greedy(env, OPTIMAL, budget), gradient_optimize(env, OPTIMAL, OracleSurrogate(), config)]
        if mode == "blocking":
            outs.append(pruned_reduce(env, OPTIMAL, budget))
        for out in outs:
            assert is_valid(out.final_env)
            assert out.wcd_after == scorer.value(out.final_env)
            assert out.reduction == out.wcd_before - out.wcd_after
            assert env.start == out.final_env.start and env.goals == out.final_env.goals
        assert budget.within(outs[0].realized_cost)
        assert outs[1].nodes_or_steps <= 4
        if mode == "blocking":
            assert outs[1].realized_cost.blocks_removed == 0
