"""Environment design: exhaustive, Pruned-Reduce, greedy and Lagrangian descent.

Every method returns a :class:`DesignOutcome` whose ``wcd_after`` comes from
the true oracle, whatever scorer guided the search.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import kernels
from .agents import OPTIMAL, AgentModel, Unreachable, is_shortest_path_agent, planning_grid
from .datagen import BLOCKED, encode
from .env import (
    Cell,
    CostVector,
    GridEnvironment,
    Modification,
    ModKind,
    apply,
    apply_all,
    candidate_modifications,
    cost,
    is_valid,
)
from .nn import Network, ShapeError, predict_and_gradient
from .wcd import TooLarge, true_wcd, wcd_notion, worstcase_value

NODE_CAP = 10**7

LAMBDA_GRID = (0.0, 0.001, 0.002, 0.005, 0.007, 0.01, 0.02, 0.05, 0.07, 0.1, 0.2, 0.5, 0.7, 1.0, 2.0, 5.0, 7.0)

MODES = ("blocking", "shared", "individual")


@dataclass(frozen=True)
class BudgetSpec:
    mode: str = "blocking"
    total: int = 0
    block: int = 0
    unblock: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown budget mode {self.mode!r}")
        if min(self.total, self.block, self.unblock) < 0:
            raise ValueError("budgets must be non-negative")

    @classmethod
    def blocking(cls, budget: int) -> "BudgetSpec":
        return cls("blocking", total=budget)

    @classmethod
    def shared(cls, budget: int) -> "BudgetSpec":
        return cls("shared", total=budget)

    @classmethod
    def individual(cls, block: int, unblock: int) -> "BudgetSpec":
        return cls("individual", block=block, unblock=unblock)

    @classmethod
    def from_ratio(cls, unblock: int, ratio: float = 5.0) -> "BudgetSpec":
        """Individual budget with ``ratio`` blocks allowed per unblock."""
        return cls.individual(int(round(ratio * unblock)), unblock)

    @property
    def allows_unblock(self) -> bool:
        return self.mode != "blocking"

    @property
    def max_modifications(self) -> int:
        return self.block + self.unblock if self.mode == "individual" else self.total

    def within(self, c: CostVector) -> bool:
        if self.mode == "blocking":
            return c.blocks_removed == 0 and c.blocks_added <= self.total
        if self.mode == "shared":
            return c.total <= self.total
        return c.blocks_added <= self.block and c.blocks_removed <= self.unblock

    def budgets(self) -> tuple[float, ...]:
        return (self.block, self.unblock) if self.mode == "individual" else (self.total,)

    def describe(self) -> str:
        if self.mode == "individual":
            return f"individual({self.block},{self.unblock})"
        return f"{self.mode}({self.total})"


def constraint_costs(c: CostVector, mode: str) -> tuple[int, ...]:
    if mode == "blocking":
        return (c.blocks_added,)
    if mode == "shared":
        return (c.total,)
    return (c.blocks_added, c.blocks_removed)


@dataclass(frozen=True)
class LagrangianConfig:
    lambdas: tuple[float, ...] = (0.0,)
    lambda_grid: tuple[float, ...] = LAMBDA_GRID
    budgets: tuple[float, ...] = (0.0,)
    max_steps: int = 50
    mode: str = "blocking"

    def __post_init__(self):
        if any(v < 0 for v in self.lambdas) or any(v < 0 for v in self.lambda_grid):
            raise ValueError("Lagrange multipliers must be non-negative")
        if not self.lambda_grid:
            raise ValueError("lambda grid is empty")
        if self.mode not in MODES:
            raise ValueError(f"unknown budget mode {self.mode!r}")

    @property
    def n_constraints(self) -> int:
        return 2 if self.mode == "individual" else 1

    def with_lambdas(self, lambdas: Sequence[float]) -> "LagrangianConfig":
        return LagrangianConfig(tuple(lambdas), self.lambda_grid, self.budgets, self.max_steps, self.mode)

    def lambda_vectors(self) -> list[tuple[float, ...]]:
        if self.n_constraints == 1:
            return [(lam,) for lam in self.lambda_grid]
        return [(a, b) for a in self.lambda_grid for b in self.lambda_grid]


@dataclass
class DesignOutcome:
    method: str
    final_env: GridEnvironment
    modifications: list[Modification]
    realized_cost: CostVector
    wcd_before: int
    wcd_after: int
    nodes_or_steps: int
    wall_time: float
    predicted_trace: list[float] = field(default_factory=list)
    lambdas: tuple[float, ...] | None = None

    @property
    def reduction(self) -> int:
        return self.wcd_before - self.wcd_after


# scorers -----------------------------------------------------------------------


class TrueWcd:
    """Ground-truth scorer; ``value`` returns None for invalid environments."""

    def __init__(self, agent: AgentModel = OPTIMAL, notion: str = "auto"):
        self.agent = agent
        self.notion = notion

    def value(self, env: GridEnvironment) -> int | None:
        if wcd_notion(env, self.agent, self.notion) == "worstcase":
            v = worstcase_value(env)
            return None if v < 0 else v
        if not is_valid(env):
            return None
        try:
            return true_wcd(env, self.agent, self.notion)
        except Unreachable:
            return None

    def values(self, envs: Sequence[GridEnvironment]) -> list[int | None]:
        return [self.value(e) for e in envs]


class Surrogate(Protocol):
    def predict_envs(self, envs: Sequence[GridEnvironment]) -> np.ndarray: ...

    def value_and_grad(self, env: GridEnvironment) -> tuple[float, np.ndarray]: ...


class NetSurrogate:
    """Trained wcd network behind the surrogate interface."""

    def __init__(self, net: Network, agent: AgentModel = OPTIMAL):
        self.net = net
        self.agent = agent

    def _encode(self, env: GridEnvironment) -> np.ndarray:
        x = encode(env, self.agent)
        if x.shape != self.net.input_shape:
            raise ShapeError(f"encoding {x.shape} does not match network input {self.net.input_shape}")
        return x

    def predict_envs(self, envs):
        if not envs:
            return np.zeros(0)
        return self.net.predict(np.stack([self._encode(e) for e in envs]))

    def value_and_grad(self, env):
        value, gx = predict_and_gradient(self.net, self._encode(env))
        return value, gx[BLOCKED]


class OracleSurrogate:
    """Surrogate that answers with the true wcd.

    Its "gradient" at a cell is the exact change in wcd from flipping that
    cell (signed for a 0 -> 1 flip), zero where the flip is illegal.
    """

    def __init__(self, agent: AgentModel = OPTIMAL, notion: str = "auto"):
        self.scorer = TrueWcd(agent, notion)

    def predict_envs(self, envs):
        return np.array([float(self.scorer.value(e)) for e in envs])

    def value_and_grad(self, env):
        base = self.scorer.value(env)
        grad = np.zeros((env.height, env.width))
        for mod in candidate_modifications(env):
            v = self.scorer.value(apply(env, mod))
            if v is None:
                continue
            sign = 1.0 if mod.kind is ModKind.BLOCK else -1.0
            grad[mod.cell] = sign * (v - base)
        return float(base), grad


def _scorer_name(scorer) -> str:
    return "greedy-true" if isinstance(scorer, TrueWcd) else "greedy-pred"


# search baselines ----------------------------------------------------------------


def _initial(env0: GridEnvironment, scorer: TrueWcd) -> int:
    w0 = scorer.value(env0)
    if w0 is None:
        raise ValueError("initial environment is invalid")
    return w0


def _outcome(method, env0, mods, scorer, wcd_before, nodes, started, trace=()) -> DesignOutcome:
    final = apply_all(env0, mods)
    after = scorer.value(final)
    return DesignOutcome(
        method=method,
        final_env=final,
        modifications=list(mods),
        realized_cost=cost(env0, final),
        wcd_before=wcd_before,
        wcd_after=after,
        nodes_or_steps=nodes,
        wall_time=time.perf_counter() - started,
        predicted_trace=list(trace),
    )


def _counts_ok(mods: Sequence[Modification], budget: BudgetSpec) -> bool:
    added = sum(m.kind is ModKind.BLOCK for m in mods)
    removed = len(mods) - added
    return budget.within(CostVector(added, removed))


def exhaustive_search(env0: GridEnvironment, agent: AgentModel = OPTIMAL, budget: BudgetSpec | int = 0,
                      node_cap: int = NODE_CAP, notion: str = "auto") -> DesignOutcome:
    """Global minimum of the true wcd over every modification set within budget.

    Sets are visited by size, then lexicographically, so the first strict
    improvement found is also the tie-break winner; search stops at wcd 0.
    """
    started = time.perf_counter()
    budget = BudgetSpec.blocking(budget) if isinstance(budget, int) else budget
    scorer = TrueWcd(agent, notion)
    mods = sorted(candidate_modifications(env0, allow_unblock=budget.allows_unblock), key=Modification.sort_key)
    k_max = budget.max_modifications
    if sum(math.comb(len(mods), k) for k in range(k_max + 1)) > node_cap:
        raise TooLarge(f"search space exceeds {node_cap} nodes")
    w0 = _initial(env0, scorer)
    best_v, best = w0, ()
    nodes = 1
    for k in range(1, k_max + 1):
        if best_v == 0:
            break
        for combo in combinations(mods, k):
            if not _counts_ok(combo, budget):
                continue
            nodes += 1
            v = scorer.value(apply_all(env0, combo))
            if v is not None and v < best_v:
                best_v, best = v, combo
                if v == 0:
                    break
    return _outcome("exhaustive", env0, best, scorer, w0, nodes, started)


def shortest_path_cells(env: GridEnvironment) -> set[Cell]:
    """Cells on at least one shortest start-goal path for some goal."""
    h, w = env.height, env.width
    start = env.start[0] * w + env.start[1]
    cells: set[Cell] = set()
    for g in env.goals:
        free = planning_grid(env, g)
        ds = kernels.bfs(free, h, w, start)
        dg = kernels.bfs(free, h, w, g[0] * w + g[1])
        total = ds[g[0] * w + g[1]]
        on = np.nonzero((ds >= 0) & (dg >= 0) & (ds + dg == total))[0]
        cells.update(divmod(int(i), w) for i in on)
    return cells - {env.start, *env.goals}


def pruned_reduce(env0: GridEnvironment, agent: AgentModel = OPTIMAL, budget: BudgetSpec | int = 0,
                  node_cap: int = NODE_CAP, notion: str = "auto") -> DesignOutcome:
    """Blocking-only branch and prune.

    A node only branches on cells that lie on a current shortest path: blocking
    any other cell leaves every shortest path, and so the wcd, unchanged.
    """
    started = time.perf_counter()
    if isinstance(budget, BudgetSpec):
        if budget.mode != "blocking":
            raise ValueError("Pruned-Reduce supports blocking-only budgets")
        budget = budget.total
    scorer = TrueWcd(agent, notion)
    w0 = _initial(env0, scorer)
    if not is_shortest_path_agent(agent, env0):
        raise ValueError("Pruned-Reduce assumes an agent that walks shortest paths")
    best_v, best = w0, ()
    nodes = 1
    frontier: list[tuple[Cell, ...]] = [()]
    seen: set[frozenset] = {frozenset()}
    for _ in range(budget):
        if best_v == 0 or not frontier:
            break
        nxt = []
        for blocks in frontier:
            env = env0.with_blocked(env0.blocked | set(blocks)) if blocks else env0
            for cell in sorted(shortest_path_cells(env)):
                key = frozenset(blocks + (cell,))
                if key in seen:
                    continue
                seen.add(key)
                nodes += 1
                if nodes > node_cap:
                    raise TooLarge(f"Pruned-Reduce exceeded {node_cap} nodes")
                child = tuple(sorted(key))
                v = scorer.value(apply_all(env0, [Modification.block(c) for c in child]))
                if v is None:
                    continue
                if v < best_v or (v == best_v and best and len(child) == len(best) and child < best):
                    best_v, best = v, child
                nxt.append(child)
                if best_v == 0:
                    break
            if best_v == 0:
                break
        frontier = nxt
    mods = [Modification.block(c) for c in best]
    return _outcome("pruned", env0, mods, scorer, w0, nodes, started)


def greedy(env0: GridEnvironment, agent: AgentModel = OPTIMAL, budget: BudgetSpec | int = 0,
           scorer: TrueWcd | Surrogate | None = None, notion: str = "auto") -> DesignOutcome:
    """Apply the single best-scoring modification while it strictly improves."""
    started = time.perf_counter()
    budget = BudgetSpec.blocking(budget) if isinstance(budget, int) else budget
    truth = TrueWcd(agent, notion)
    scorer = scorer if scorer is not None else truth
    w0 = _initial(env0, truth)
    use_truth = isinstance(scorer, TrueWcd)
    current = float(w0) if use_truth else float(scorer.predict_envs([env0])[0])
    trace = [current]
    env, mods, evaluated = env0, [], 0
    while True:
        options = []
        for mod in sorted(candidate_modifications(env, allow_unblock=budget.allows_unblock), key=Modification.sort_key):
            cand = apply(env, mod)
            if not budget.within(cost(env0, cand)):
                continue
            options.append((mod, cand))
        if not options:
            break
        if use_truth:
            scores = [scorer.value(c) for _, c in options]
            valid = [(s, i) for i, s in enumerate(scores) if s is not None]
        else:
            valid_idx = [i for i, (_, c) in enumerate(options) if goals_reachable(c)]
            preds = scorer.predict_envs([options[i][1] for i in valid_idx])
            valid = list(zip(preds.tolist(), valid_idx))
        evaluated += len(options)
        if not valid:
            break
        best_score, best_i = min(valid)
        if not best_score < current:
            break
        current = float(best_score)
        mod, env = options[best_i]
        mods.append(mod)
        trace.append(current)
    out = _outcome(_scorer_name(scorer), env0, mods, truth, w0, evaluated, started, trace)
    return out


# Lagrangian descent ---------------------------------------------------------------


def lagrangian_value(env0: GridEnvironment, env: GridEnvironment, lambdas: Sequence[float],
                     budgets: Sequence[float], predicted_wcd: float, mode: str = "blocking") -> float:
    costs = constraint_costs(cost(env0, env), mode)
    if len(lambdas) != len(costs) or len(budgets) != len(costs):
        raise ValueError(f"mode {mode!r} needs {len(costs)} multipliers and budgets")
    return float(predicted_wcd) + sum(lam * (c - b) for lam, c, b in zip(lambdas, costs, budgets))


def _penalty_delta(env0: GridEnvironment, mod: Modification, lambdas: Sequence[float], mode: str) -> float | None:
    """First-order change of the penalty term for one flip; None if the flip is not allowed."""
    originally_blocked = mod.cell in env0.blocked
    if mod.kind is ModKind.BLOCK:
        delta = (0, -1) if originally_blocked else (1, 0)
    else:
        delta = (0, 1) if originally_blocked else (-1, 0)
    if mode == "blocking":
        if delta[1] != 0:
            return None
        return lambdas[0] * delta[0]
    if mode == "shared":
        return lambdas[0] * (delta[0] + delta[1])
    return lambdas[0] * delta[0] + lambdas[1] * delta[1]


def goals_reachable(env: GridEnvironment) -> bool:
    """Reachability part of validity, via the BFS kernel.

    A legal flip of a valid environment can only break reachability, so this
    is the full validity check inside the design loops.
    """
    h, w = env.height, env.width
    start = env.start[0] * w + env.start[1]
    for g in env.goals:
        dist = kernels.bfs(planning_grid(env, g), h, w, start)
        if dist[g[0] * w + g[1]] < 0:
            return False
    return True


def _flip_for(env: GridEnvironment, cell: Cell) -> Modification:
    return Modification.unblock(cell) if cell in env.blocked else Modification.block(cell)


def gradient_optimize(env0: GridEnvironment, agent: AgentModel, surrogate: Surrogate,
                      config: LagrangianConfig, notion: str = "auto") -> DesignOutcome:
    """Discrete gradient descent on the Lagrangian of the surrogate wcd.

    Each step ranks cell flips by their first-order change in the Lagrangian
    (surrogate input gradient on the blocked channel plus the penalty delta),
    applies the best-ranked flip that leaves the environment valid, and stops
    once the surrogate Lagrangian no longer strictly decreases.
    """
    started = time.perf_counter()
    lambdas = tuple(config.lambdas)
    budgets = tuple(config.budgets) if len(config.budgets) == config.n_constraints else (0.0,) * config.n_constraints
    if len(lambdas) != config.n_constraints:
        raise ValueError(f"mode {config.mode!r} needs {config.n_constraints} multipliers")
    truth = TrueWcd(agent, notion)
    w0 = _initial(env0, truth)
    fixed = {env0.start, *env0.goals}
    env = env0
    pred, grad = surrogate.value_and_grad(env)
    lag = lagrangian_value(env0, env, lambdas, budgets, pred, config.mode)
    trace = [pred]
    mods: list[Modification] = []
    for _ in range(config.max_steps):
        ranked = []
        for r in range(env.height):
            for c in range(env.width):
                cell = (r, c)
                if cell in fixed:
                    continue
                mod = _flip_for(env, cell)
                pen = _penalty_delta(env0, mod, lambdas, config.mode)
                if pen is None:
                    continue
                direction = 1.0 if mod.kind is ModKind.BLOCK else -1.0
                score = direction * grad[cell] + pen
                if score < 0:
                    ranked.append((score, mod.sort_key(), mod))
        ranked.sort(key=lambda t: (t[0], t[1]))
        accepted = False
        for _, _, mod in ranked:
            cand = apply(env, mod)
            if not goals_reachable(cand):
                continue
            cand_pred, cand_grad = surrogate.value_and_grad(cand)
            cand_lag = lagrangian_value(env0, cand, lambdas, budgets, cand_pred, config.mode)
            if cand_lag < lag:
                env, pred, grad, lag = cand, cand_pred, cand_grad, cand_lag
                mods.append(mod)
                trace.append(pred)
                accepted = True
            break
        if not accepted:
            break
    out = _outcome("gradient", env0, _net_modifications(env0, env), truth, w0, len(mods), started, trace)
    out.lambdas = lambdas
    return out


def _net_modifications(env0: GridEnvironment, env: GridEnvironment) -> list[Modification]:
    """Edits taking ``env0`` to ``env`` (flips that cancelled out are dropped)."""
    adds = [Modification.block(c) for c in env.blocked - env0.blocked]
    removes = [Modification.unblock(c) for c in env0.blocked - env.blocked]
    return sorted(adds + removes, key=Modification.sort_key)


@dataclass
class SweepEntry:
    lambdas: tuple[float, ...]
    outcome: DesignOutcome


def lambda_sweep(env0: GridEnvironment, agent: AgentModel, surrogate: Surrogate,
                 config: LagrangianConfig, notion: str = "auto") -> list[SweepEntry]:
    """One descent per multiplier vector; two constraints sweep the product grid."""
    return [
        SweepEntry(lams, gradient_optimize(env0, agent, surrogate, config.with_lambdas(lams), notion))
        for lams in config.lambda_vectors()
    ]


def frontier(entries: Iterable[SweepEntry]) -> dict[int, SweepEntry]:
    """Best reduction per realized total cost; ties keep the earlier entry."""
    best: dict[int, SweepEntry] = {}
    for e in entries:
        key = e.outcome.realized_cost.total
        cur = best.get(key)
        if cur is None or e.outcome.reduction > cur.outcome.reduction:
            best[key] = e
    return dict(sorted(best.items()))


def best_within(entries: Iterable[SweepEntry], budget: BudgetSpec) -> SweepEntry | None:
    """Best-reduction sweep entry whose realized cost fits ``budget``."""
    fits = [e for e in entries if budget.within(e.outcome.realized_cost)]
    if not fits:
        return None
    return max(fits, key=lambda e: (e.outcome.reduction, -e.outcome.realized_cost.total))
