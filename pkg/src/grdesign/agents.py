"""Agent behaviour models: discounting planners and learned policies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from . import kernels
from .env import Cell, GridEnvironment, PreconditionError
from .nn import EmptyDataset, Network, TrainConfig, TrainingReport, policy_network_spec, softmax, train

MAX_SUBGOALS = 12
DEFAULT_EPSILON = 0.05
MIN_EPSILON = 0.01


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3

    @property
    def delta(self) -> Cell:
        return _DELTAS[self]

    @property
    def letter(self) -> str:
        return "UDLR"[self]


_DELTAS = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1)}


def step(cell: Cell, action: int) -> Cell:
    dr, dc = _DELTAS[int(action)]
    return cell[0] + dr, cell[1] + dc


class PlanningError(Exception):
    pass


class Unreachable(PlanningError):
    pass


class CapExceeded(PlanningError):
    pass


class NonTerminating(PlanningError):
    pass


# discounting -------------------------------------------------------------------


@dataclass(frozen=True)
class Geometric:
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    variant = "geometric"

    @property
    def param(self) -> float:
        return self.gamma


@dataclass(frozen=True)
class Hyperbolic:
    k: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be non-negative")

    variant = "hyperbolic"

    @property
    def param(self) -> float:
        return self.k


DiscountSpec = Union[Geometric, Hyperbolic]


def discount_weight(spec: DiscountSpec, t: int) -> float:
    if isinstance(spec, Geometric):
        return spec.gamma**t
    return 1.0 / (1.0 + spec.k * t)


def discount_table(spec: DiscountSpec, horizon: int) -> np.ndarray:
    t = np.arange(horizon + 1, dtype=np.float64)
    if isinstance(spec, Geometric):
        return spec.gamma**t
    return 1.0 / (1.0 + spec.k * t)


def parse_discount(text: str) -> DiscountSpec:
    """``optimal``, ``geometric:0.9`` or ``hyperbolic:8``."""
    kind, _, value = text.partition(":")
    kind = kind.strip().lower()
    if kind in ("optimal", "geometric") and not value:
        return Geometric(1.0)
    if kind == "geometric":
        return Geometric(float(value))
    if kind == "hyperbolic":
        return Hyperbolic(float(value or 0.0))
    raise ValueError(f"unknown agent spec {text!r}")


# agents ----------------------------------------------------------------------


@dataclass(frozen=True)
class Planner:
    """Precommitting planner: picks one plan at t=0 by exact finite-horizon DP."""

    discount: DiscountSpec = field(default_factory=Geometric)
    horizon: int | None = None
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")

    def horizon_for(self, env: GridEnvironment) -> int:
        h = self.horizon if self.horizon is not None else 4 * (env.width + env.height)
        if h < env.width + env.height:
            raise PreconditionError("horizon must be at least width + height")
        return h

    @property
    def variant(self) -> str:
        return self.discount.variant

    @property
    def param(self) -> float:
        return self.discount.param

    def describe(self) -> dict:
        return {"variant": self.variant, "param": self.param}


@dataclass(eq=False)
class LearnedPolicy:
    """Stochastic policy given by a network over :func:`policy_features`."""

    net: Network
    horizon: int | None = None

    variant = "learned"
    param = 0.0

    def horizon_for(self, env: GridEnvironment) -> int:
        return self.horizon if self.horizon is not None else 4 * (env.width + env.height)

    def describe(self) -> dict:
        return {"variant": self.variant, "param": self.param}

    def logits(self, env: GridEnvironment, goal: Cell, cell: Cell, collected: int) -> np.ndarray:
        x = policy_features(env, cell, goal, collected)
        return self.net.forward(x)[0]


AgentModel = Union[Planner, LearnedPolicy]

OPTIMAL = Planner(Geometric(1.0))


def is_shortest_path_agent(agent: AgentModel, env: GridEnvironment) -> bool:
    """True when the agent always walks a shortest path in ``env``.

    Any positive, non-increasing discount with only a terminal reward
    prefers earliest arrival.
    """
    return isinstance(agent, Planner) and not env.subgoal_rewards


# trajectories ------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    goal: Cell
    steps: tuple[tuple[Cell, Action], ...]
    terminal: Cell

    @property
    def actions(self) -> tuple[Action, ...]:
        return tuple(a for _, a in self.steps)

    @property
    def cells(self) -> tuple[Cell, ...]:
        return tuple(c for c, _ in self.steps) + (self.terminal,)

    def __len__(self) -> int:
        return len(self.steps)

    def action_string(self) -> str:
        return "".join(a.letter for a in self.actions)

    @classmethod
    def from_actions(cls, start: Cell, goal: Cell, actions: Sequence[int]) -> "Trajectory":
        steps = []
        cell = start
        for a in actions:
            steps.append((cell, Action(int(a))))
            cell = step(cell, a)
        return cls(goal, tuple(steps), cell)


def check_trajectory(env: GridEnvironment, traj: Trajectory) -> list[str]:
    """Violated trajectory invariants (empty when the trajectory is sound)."""
    problems = []
    cell = env.start
    if traj.steps and traj.steps[0][0] != env.start:
        problems.append("does not start at env.start")
    walls = env.blocked | set(env.other_goals(traj.goal))
    for i, (c, a) in enumerate(traj.steps):
        if c != cell:
            problems.append(f"step {i} not contiguous")
        cell = step(c, a)
        if not env.in_bounds(cell):
            problems.append(f"step {i} leaves the grid")
        elif cell in walls:
            problems.append(f"step {i} enters a blocked cell")
    if cell != traj.terminal:
        problems.append("terminal does not match last step")
    if traj.terminal != traj.goal:
        problems.append("terminal is not the goal")
    if traj.goal in [c for c, _ in traj.steps]:
        problems.append("passes through the goal before terminating")
    return problems


def collected_masks(env: GridEnvironment, traj: Trajectory) -> list[int]:
    """Collected-subgoal bitmask in effect before each step."""
    index = subgoal_index(env)
    mask, out = 0, []
    for cell, _ in traj.steps:
        bit = index.get(cell)
        if bit is not None and cell != env.start:
            mask |= 1 << bit
        out.append(mask)
    return out


def subgoal_index(env: GridEnvironment) -> dict[Cell, int]:
    return {cell: i for i, (cell, _) in enumerate(env.subgoal_rewards)}


# planning ----------------------------------------------------------------------


def planning_grid(env: GridEnvironment, goal: Cell) -> np.ndarray:
    """Flat uint8 free mask with the other goals treated as blocked."""
    return env.free_mask(env.other_goals(goal)).astype(np.uint8).ravel()


def _flat(env: GridEnvironment, cell: Cell) -> int:
    return cell[0] * env.width + cell[1]


def _unflat(env: GridEnvironment, index: int) -> Cell:
    return divmod(int(index), env.width)


@lru_cache(maxsize=4096)
def _policy_table(env: GridEnvironment, planner: Planner, goal: Cell):
    subs = env.subgoal_rewards
    if len(subs) > MAX_SUBGOALS:
        raise CapExceeded(f"{len(subs)} subgoal cells exceed the cap of {MAX_SUBGOALS}")
    horizon = planner.horizon_for(env)
    sub_bit = np.full(env.width * env.height, -1, dtype=np.int32)
    for i, (cell, _) in enumerate(subs):
        sub_bit[_flat(env, cell)] = i
    rewards = np.array([v for _, v in subs], dtype=np.float64)
    free = planning_grid(env, goal)
    policy, value0, arrival0 = kernels.plan_policy(
        free, env.height, env.width, _flat(env, goal), sub_bit, rewards,
        float(env.goal_reward), discount_table(planner.discount, horizon), horizon,
    )
    return policy, value0, arrival0


@lru_cache(maxsize=8192)
def _shortest_actions(env: GridEnvironment, goal: Cell):
    free = planning_grid(env, goal)
    return kernels.shortest_path_actions(free, env.height, env.width, _flat(env, env.start), _flat(env, goal))


def plan_trajectory(env: GridEnvironment, agent: AgentModel, goal: Cell) -> Trajectory:
    goal = (int(goal[0]), int(goal[1]))
    if goal not in env.goals:
        raise PreconditionError(f"{goal} is not a goal of the environment")
    if isinstance(agent, LearnedPolicy):
        return _rollout_learned(env, agent, goal)
    horizon = agent.horizon_for(env)
    if not env.subgoal_rewards:
        actions = _shortest_actions(env, goal)
        if actions is None or len(actions) > horizon:
            raise Unreachable(f"goal {goal} unreachable within horizon {horizon}")
        return Trajectory.from_actions(env.start, goal, actions)
    policy, _, _ = _policy_table(env, agent, goal)
    index = subgoal_index(env)
    cell, mask, actions = env.start, 0, []
    for t in range(horizon):
        a = int(policy[t, _flat(env, cell), mask])
        if a < 0:
            raise Unreachable(f"goal {goal} unreachable within horizon {horizon}")
        actions.append(a)
        cell = step(cell, a)
        if cell == goal:
            return Trajectory.from_actions(env.start, goal, actions)
        bit = index.get(cell)
        if bit is not None:
            mask |= 1 << bit
    raise Unreachable(f"goal {goal} unreachable within horizon {horizon}")


def planned_value(env: GridEnvironment, planner: Planner, goal: Cell) -> float:
    """Discounted return of the DP plan from the start (for checking)."""
    _, value0, _ = _policy_table(env, planner, goal)
    return float(value0[_flat(env, env.start), 0])


def trajectory_return(env: GridEnvironment, discount: DiscountSpec, traj: Trajectory) -> float:
    subs = env.subgoals
    seen: set[Cell] = set()
    total = 0.0
    for n, cell in enumerate(traj.cells[1:], start=1):
        if cell == traj.goal:
            total += env.goal_reward * discount_weight(discount, n)
            break
        if cell in subs and cell not in seen:
            seen.add(cell)
            total += subs[cell] * discount_weight(discount, n)
    return total


def shortest_path_action(env: GridEnvironment, goal: Cell, cell: Cell) -> int | None:
    """First action (Up, Down, Left, Right order) on a shortest path to ``goal``."""
    free = planning_grid(env, goal)
    dist = _goal_distances(env, goal)
    d = dist[_flat(env, cell)]
    if d <= 0:
        return None
    for a in Action:
        n = step(cell, a)
        if env.in_bounds(n) and (free[_flat(env, n)] or n == goal) and dist[_flat(env, n)] == d - 1:
            return int(a)
    return None


@lru_cache(maxsize=8192)
def _goal_distances(env: GridEnvironment, goal: Cell) -> np.ndarray:
    return kernels.bfs(planning_grid(env, goal), env.height, env.width, _flat(env, goal))


def planned_action(env: GridEnvironment, planner: Planner, goal: Cell, cell: Cell,
                   collected: int = 0, t: int = 0) -> int | None:
    if not env.subgoal_rewards:
        return shortest_path_action(env, goal, cell)
    policy, _, _ = _policy_table(env, planner, goal)
    if t >= policy.shape[0]:
        return None
    a = int(policy[t, _flat(env, cell), collected])
    return None if a < 0 else a


def valid_actions(env: GridEnvironment, goal: Cell, cell: Cell) -> list[int]:
    walls = env.blocked | set(env.other_goals(goal))
    return [int(a) for a in Action if env.in_bounds(step(cell, a)) and step(cell, a) not in walls]


# likelihoods ------------------------------------------------------------------


def action_likelihood(agent: AgentModel, env: GridEnvironment, goal: Cell, cell: Cell,
                      collected: int = 0, t: int = 0) -> dict[Action, float]:
    """Probability of each action at ``cell`` for an agent heading to ``goal``.

    Planners are smoothed: the planned action gets ``1 - eps + eps/4`` and
    every other action ``eps/4``; with no planned action the result is uniform.
    """
    if not env.is_free(cell):
        raise PreconditionError(f"{cell} is blocked or out of bounds")
    if isinstance(agent, LearnedPolicy):
        probs = softmax(agent.logits(env, goal, cell, collected))
        return {Action(i): float(p) for i, p in enumerate(probs)}
    eps = agent.epsilon
    planned = planned_action(env, agent, goal, cell, collected, t)
    if planned is None:
        return {a: 0.25 for a in Action}
    return {a: (1 - eps + eps / 4) if a == planned else eps / 4 for a in Action}


# learned policies ----------------------------------------------------------------


def policy_channels(env: GridEnvironment) -> int:
    return 7 + len(env.goals)


def policy_input_shape(env: GridEnvironment) -> tuple[int, int, int]:
    """Features are an agent-centred window covering the whole grid from any cell."""
    return policy_channels(env), 2 * env.height - 1, 2 * env.width - 1


def policy_features(env: GridEnvironment, cell: Cell, goal: Cell, collected: int = 0) -> np.ndarray:
    """Agent-centred planes for a learned policy.

    Blocked (outside the grid counts as blocked), start, one plane per goal,
    remaining subgoal rewards, position, target, proximity 1/(1+d) to the
    target along free cells, and an inside-the-grid mask.
    """
    g = len(env.goals)
    h, w = env.height, env.width
    x = np.zeros((6 + g, h, w))
    for r, c in env.blocked:
        x[0, r, c] = 1.0
    x[1][env.start] = 1.0
    for i, goal_cell in enumerate(env.goals):
        x[2 + i][goal_cell] = 1.0
    for i, (sub, value) in enumerate(env.subgoal_rewards):
        if not (collected >> i) & 1:
            x[2 + g][sub] = value / env.goal_reward
    x[3 + g][cell] = 1.0
    x[4 + g][goal] = 1.0
    dist = _goal_distances(env, goal).reshape(h, w)
    x[5 + g] = np.where(dist >= 0, 1.0 / (1.0 + np.maximum(dist, 0)), 0.0)
    out = np.zeros(policy_input_shape(env))
    r0, c0 = h - 1 - cell[0], w - 1 - cell[1]
    out[0] = 1.0
    out[: 6 + g, r0 : r0 + h, c0 : c0 + w] = x
    out[6 + g, r0 : r0 + h, c0 : c0 + w] = 1.0
    return out


def _rollout_learned(env: GridEnvironment, agent: LearnedPolicy, goal: Cell) -> Trajectory:
    index = subgoal_index(env)
    cell, mask, actions = env.start, 0, []
    for _ in range(agent.horizon_for(env)):
        legal = valid_actions(env, goal, cell)
        if not legal:
            raise NonTerminating(f"no legal move from {cell}")
        logits = agent.logits(env, goal, cell, mask)
        a = max(legal, key=lambda i: (logits[i], -i))
        actions.append(a)
        cell = step(cell, a)
        if cell == goal:
            return Trajectory.from_actions(env.start, goal, actions)
        bit = index.get(cell)
        if bit is not None:
            mask |= 1 << bit
    raise NonTerminating(f"learned policy did not reach {goal} within the horizon")


def step_samples(pairs: Sequence[tuple[GridEnvironment, Trajectory]]):
    """Flatten trajectories into (features, action) arrays plus step metadata."""
    xs, ys, meta = [], [], []
    for env, traj in pairs:
        for (cell, action), mask in zip(traj.steps, collected_masks(env, traj)):
            xs.append(policy_features(env, cell, traj.goal, mask))
            ys.append(int(action))
            meta.append((env, traj.goal, cell))
    return np.array(xs), np.array(ys, dtype=np.int64), meta


@dataclass
class CloneResult:
    agent: LearnedPolicy
    heldout_accuracy: float
    baseline_accuracy: float
    report: TrainingReport
    n_train_trajectories: int
    n_heldout_trajectories: int


def clone_policy(pairs: Sequence[tuple[GridEnvironment, Trajectory]],
                 config: TrainConfig | None = None) -> CloneResult:
    """Behaviour cloning by cross-entropy on (state, action) pairs.

    Held-out trajectories (``validation_fraction`` of them) are never trained
    on; the result reports next-action accuracy on them for the clone and for
    a shortest-path ("assume optimal") predictor.
    """
    if not pairs:
        raise EmptyDataset("no trajectories to clone")
    config = config or TrainConfig(learning_rate=1e-3, epochs=20, loss="cross_entropy")
    sizes = {(env.height, env.width) for env, _ in pairs}
    if len(sizes) != 1:
        raise PreconditionError("all environments must share grid dimensions")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(pairs))
    n_hold = int(math.floor(len(pairs) * config.validation_fraction)) if len(pairs) > 1 else 0
    held = [pairs[i] for i in order[:n_hold]]
    fit = [pairs[i] for i in order[n_hold:]]
    x, y, _ = step_samples(fit)
    env0 = pairs[0][0]
    net = Network(policy_network_spec(*policy_input_shape(env0)), seed=config.seed)
    inner = TrainConfig(**{**config.__dict__, "loss": "cross_entropy"})
    report = train(net, x, y, inner)
    agent = LearnedPolicy(net)
    acc = policy_accuracy(agent, held) if held else math.nan
    base = assume_optimal_accuracy(held) if held else math.nan
    return CloneResult(agent, acc, base, report, len(fit), len(held))


def policy_accuracy(agent: LearnedPolicy, pairs) -> float:
    x, y, _ = step_samples(pairs)
    if len(y) == 0:
        return math.nan
    logits = np.concatenate([agent.net.forward(x[i : i + 512]) for i in range(0, len(x), 512)])
    return float(np.mean(np.argmax(logits, axis=1) == y))


def assume_optimal_accuracy(pairs) -> float:
    """Accuracy of predicting the tie-broken shortest-path action at every step."""
    hits = total = 0
    for env, traj in pairs:
        for cell, action in traj.steps:
            hits += shortest_path_action(env, traj.goal, cell) == int(action)
            total += 1
    return hits / total if total else math.nan
