"""Bayesian goal inference from observed action prefixes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .agents import (
    MIN_EPSILON,
    Action,
    AgentModel,
    Planner,
    Trajectory,
    action_likelihood,
    plan_trajectory,
    step,
    subgoal_index,
)
from .env import Cell, GridEnvironment, PreconditionError


class DegenerateUpdate(ValueError):
    pass


@dataclass(frozen=True)
class Posterior:
    probabilities: tuple[float, ...]

    def __post_init__(self):
        p = self.probabilities
        if any(v < 0 or v > 1 for v in p) or abs(sum(p) - 1.0) > 1e-9:
            raise ValueError("posterior must be a probability vector")

    @classmethod
    def uniform(cls, n: int) -> "Posterior":
        return cls(tuple([1.0 / n] * n))

    def argmax(self) -> list[int]:
        """Indices sharing the maximal probability."""
        top = max(self.probabilities)
        return [i for i, v in enumerate(self.probabilities) if math.isclose(v, top, rel_tol=1e-12, abs_tol=1e-15)]


def update(post: Posterior, likelihood_per_goal: Sequence[float]) -> Posterior:
    lik = np.asarray(likelihood_per_goal, dtype=np.float64)
    if lik.shape != (len(post.probabilities),):
        raise ValueError("one likelihood per goal is required")
    if np.any(lik < 0):
        raise ValueError("likelihoods must be non-negative")
    joint = np.asarray(post.probabilities) * lik
    total = joint.sum()
    if total <= 0:
        raise DegenerateUpdate("all goals have zero likelihood")
    return Posterior(tuple((joint / total).tolist()))


Observation = Sequence[tuple[Cell, int]]


def _as_steps(env: GridEnvironment, observed: Trajectory | Observation) -> list[tuple[Cell, Action]]:
    steps = observed.steps if isinstance(observed, Trajectory) else observed
    out = []
    cell = env.start
    for c, a in steps:
        c = tuple(c)
        if c != cell or not env.is_free(c):
            raise PreconditionError(f"observation at {c} is not consistent with the grid")
        out.append((c, Action(int(a))))
        cell = step(c, a)
    return out


def infer_goal(env: GridEnvironment, model: AgentModel, observed: Trajectory | Observation) -> Posterior:
    """Posterior over ``env.goals`` after the observed (cell, action) steps."""
    if isinstance(model, Planner) and model.epsilon < MIN_EPSILON:
        raise ValueError(f"inference needs epsilon >= {MIN_EPSILON}")
    post = Posterior.uniform(len(env.goals))
    index = subgoal_index(env)
    mask = 0
    for t, (cell, action) in enumerate(_as_steps(env, observed)):
        bit = index.get(cell)
        if bit is not None and cell != env.start:
            mask |= 1 << bit
        lik = [action_likelihood(model, env, g, cell, mask, t)[action] for g in env.goals]
        post = update(post, lik)
    return post


def reveal_count(fraction: float, length: int) -> int:
    return min(length, math.ceil(fraction * length - 1e-9))


@dataclass
class AccuracyPoint:
    fraction: float
    mean: float
    stderr: float
    n: int


def score(post: Posterior, truth: int) -> float:
    """1 for a unique correct argmax, 1/|ties| for a tie containing the truth."""
    top = post.argmax()
    return 1.0 / len(top) if truth in top else 0.0


def evaluate_inference(envs: Iterable[GridEnvironment], walker: AgentModel, model: AgentModel,
                       fractions: Sequence[float]) -> list[AccuracyPoint]:
    fractions = list(fractions)
    if fractions != sorted(fractions) or any(not 0 < k <= 1 for k in fractions):
        raise ValueError("fractions must be ascending values in (0, 1]")
    scores: list[list[float]] = [[] for _ in fractions]
    for env in envs:
        for gi, goal in enumerate(env.goals):
            traj = plan_trajectory(env, walker, goal)
            for slot, k in enumerate(fractions):
                shown = traj.steps[: reveal_count(k, len(traj))]
                scores[slot].append(score(infer_goal(env, model, shown), gi))
    out = []
    for k, s in zip(fractions, scores):
        arr = np.asarray(s)
        stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        out.append(AccuracyPoint(k, float(arr.mean()) if len(arr) else 0.0, stderr, len(arr)))
    return out
