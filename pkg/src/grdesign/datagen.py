"""Environment encodings and simulated wcd datasets."""
from __future__ import annotations

import hashlib
import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agents import AgentModel, Geometric, Hyperbolic, LearnedPolicy, Planner, parse_discount
from .env import Cell, GenerationConfig, GridEnvironment, Modification, random_environment
from .nn import ShapeError
from .wcd import true_wcd

BLOCKED, START = 0, 1


class NotModifiable(ValueError):
    pass


@dataclass(frozen=True)
class EncodingSpec:
    size: int
    goal_count: int = 2

    @property
    def channels(self) -> int:
        return 4 + self.goal_count

    @property
    def param_channel(self) -> int:
        return 2 + self.goal_count

    @property
    def subgoal_channel(self) -> int:
        return 3 + self.goal_count

    def layout(self) -> list[str]:
        goals = [f"goal_{i}" for i in range(self.goal_count)]
        return ["blocked", "start", *goals, "agent_param", "subgoal_reward"]

    def layout_hash(self) -> str:
        return hashlib.sha256(",".join(self.layout()).encode()).hexdigest()[:16]


def agent_tag(agent: AgentModel) -> dict:
    return {"variant": agent.variant, "param": float(agent.param)}


def agent_from_tag(tag: dict) -> Planner:
    if tag["variant"] == "geometric":
        return Planner(Geometric(tag["param"]))
    if tag["variant"] == "hyperbolic":
        return Planner(Hyperbolic(tag["param"]))
    raise ValueError(f"cannot rebuild agent variant {tag['variant']!r}")


def encode(env: GridEnvironment, agent: AgentModel, spec: EncodingSpec | None = None) -> np.ndarray:
    spec = spec or EncodingSpec(env.width, len(env.goals))
    if env.width != spec.size or env.height != spec.size or len(env.goals) != spec.goal_count:
        raise ShapeError(f"environment {env.height}x{env.width} does not match encoding size {spec.size}")
    x = np.zeros((spec.channels, spec.size, spec.size))
    for r, c in env.blocked:
        x[BLOCKED, r, c] = 1.0
    x[START][env.start] = 1.0
    for i, g in enumerate(env.goals):
        x[2 + i][g] = 1.0
    x[spec.param_channel] = float(agent.param)
    for cell, value in env.subgoal_rewards:
        x[spec.subgoal_channel][cell] = value / env.goal_reward
    return x


def decode(x: np.ndarray, goal_reward: float = 1.0) -> GridEnvironment:
    """Rebuild the environment structure from an encoding."""
    x = np.asarray(x)
    goal_count = x.shape[0] - 4
    size = x.shape[1]

    def ones(ch: int) -> list[Cell]:
        return [(int(r), int(c)) for r, c in zip(*np.nonzero(x[ch] > 0.5))]

    (start,) = ones(START)
    goals = tuple(ones(2 + i)[0] for i in range(goal_count))
    sub = x[3 + goal_count]
    subs = tuple(((int(r), int(c)), float(sub[r, c] * goal_reward)) for r, c in zip(*np.nonzero(sub)))
    return GridEnvironment(size, size, start, goals, frozenset(ones(BLOCKED)), subs, goal_reward)


def tensor_flip_to_modification(channel: int, cell: Cell, direction: int) -> Modification:
    """Map a proposed flip of one encoding entry to an environment edit.

    ``direction`` is +1 for a 0 -> 1 flip and -1 for 1 -> 0.
    """
    if channel != BLOCKED:
        raise NotModifiable(f"channel {channel} is not the blocked channel")
    if direction > 0:
        return Modification.block(cell)
    if direction < 0:
        return Modification.unblock(cell)
    raise ValueError("direction must be non-zero")


# datasets ----------------------------------------------------------------------

AgentSampler = Callable[[np.random.Generator], AgentModel]


@dataclass(frozen=True)
class ParamRangeSampler:
    """Draws a planner whose discount parameter is uniform on ``[low, high]``."""

    variant: str
    low: float
    high: float

    def __call__(self, rng: np.random.Generator) -> Planner:
        value = float(rng.uniform(self.low, self.high))
        if self.variant == "geometric":
            return Planner(Geometric(value))
        return Planner(Hyperbolic(value))


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    agents: list[dict]
    envs: list[GridEnvironment]

    def __len__(self) -> int:
        return len(self.y)

    def summary(self) -> dict:
        counts = Counter(int(v) for v in self.y)
        return {
            "count": len(self),
            "mean": float(np.mean(self.y)) if len(self) else 0.0,
            "std": float(np.std(self.y)) if len(self) else 0.0,
            "histogram": {str(k): counts[k] for k in sorted(counts)},
        }


def _worker(args) -> tuple[dict, np.ndarray, dict, float]:
    gen, agent_spec, child_seed = args
    rng = np.random.default_rng(child_seed)
    agent = agent_spec if isinstance(agent_spec, (Planner, LearnedPolicy)) else agent_spec(rng)
    env = random_environment(gen, rng)
    y = true_wcd(env, agent)
    x = encode(env, agent)
    return env.to_dict(), x, agent_tag(agent), float(y)


def generate_dataset(gen: GenerationConfig, agent_sampler: AgentSampler | AgentModel, count: int,
                     seed: int, jobs: int = 1) -> Dataset:
    """Label ``count`` random environments with their true wcd.

    Each sample draws from its own child seed of ``seed``, so results do not
    depend on ``jobs``.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    seeds = np.random.SeedSequence(seed).spawn(count)
    tasks = [(gen, agent_sampler, s) for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_worker, tasks, chunksize=64))
    else:
        results = [_worker(t) for t in tasks]
    envs = [GridEnvironment.from_dict(r[0]) for r in results]
    return Dataset(
        x=np.stack([r[1] for r in results]),
        y=np.array([r[3] for r in results]),
        agents=[r[2] for r in results],
        envs=envs,
    )


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """JSONL, one record per sample; a ``.npz`` path writes the binary twin."""
    path = Path(path)
    if path.suffix == ".npz":
        np.savez_compressed(
            path, x=ds.x, y=ds.y,
            agents=np.array([json.dumps(a, sort_keys=True) for a in ds.agents]),
            envs=np.array([e.to_json() for e in ds.envs]),
        )
        return
    with path.open("w") as fh:
        for x, y, agent, env in zip(ds.x, ds.y, ds.agents, ds.envs):
            record = {
                "x": [float(v) for v in x.ravel()],
                "shape": list(x.shape),
                "agent": agent,
                "y": float(y),
                "env": env.to_dict(),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    if path.suffix == ".npz":
        data = np.load(path)
        return Dataset(
            x=data["x"], y=data["y"],
            agents=[json.loads(a) for a in data["agents"]],
            envs=[GridEnvironment.from_json(e) for e in data["envs"]],
        )
    xs, ys, agents, envs = [], [], [], []
    with path.open() as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            xs.append(np.asarray(rec["x"], dtype=np.float64).reshape(rec["shape"]))
            ys.append(rec["y"])
            agents.append(rec["agent"])
            envs.append(GridEnvironment.from_dict(rec["env"]) if "env" in rec else decode(xs[-1]))
    return Dataset(np.stack(xs), np.array(ys), agents, envs)


def parse_agent(text: str) -> Planner:
    return Planner(parse_discount(text))


def encode_batch(envs: Sequence[GridEnvironment], agent: AgentModel) -> np.ndarray:
    return np.stack([encode(e, agent) for e in envs])
