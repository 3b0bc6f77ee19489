"""Grid-world environments, modifications and cost accounting.

Cells are ``(row, col)`` tuples. Environments are immutable; every edit
returns a new :class:`GridEnvironment`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

Cell = tuple[int, int]

NEIGHBOR_OFFSETS: tuple[Cell, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))

MAX_REJECTIONS = 10_000


class GridError(Exception):
    """Base class for environment errors."""


class InvalidModification(GridError):
    pass


class GenerationExhausted(GridError):
    pass


class PreconditionError(GridError, ValueError):
    pass


@dataclass(frozen=True)
class GridEnvironment:
    width: int
    height: int
    start: Cell
    goals: tuple[Cell, ...]
    blocked: frozenset[Cell] = frozenset()
    subgoal_rewards: tuple[tuple[Cell, float], ...] = ()
    goal_reward: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", _cell(self.start))
        object.__setattr__(self, "goals", tuple(_cell(g) for g in self.goals))
        object.__setattr__(self, "blocked", frozenset(_cell(c) for c in self.blocked))
        subs = self.subgoal_rewards
        if isinstance(subs, Mapping):
            subs = subs.items()
        object.__setattr__(
            self,
            "subgoal_rewards",
            tuple(sorted((_cell(c), float(v)) for c, v in subs)),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width

    @property
    def subgoals(self) -> dict[Cell, float]:
        return dict(self.subgoal_rewards)

    def in_bounds(self, cell: Cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.blocked

    def cells(self) -> Iterable[Cell]:
        for r in range(self.height):
            for c in range(self.width):
                yield (r, c)

    def free_mask(self, extra_blocked: Iterable[Cell] = ()) -> np.ndarray:
        """Boolean ``(height, width)`` array, True where a cell can be entered."""
        mask = np.ones((self.height, self.width), dtype=bool)
        for r, c in self.blocked:
            mask[r, c] = False
        for r, c in extra_blocked:
            mask[r, c] = False
        return mask

    def other_goals(self, goal: Cell) -> tuple[Cell, ...]:
        return tuple(g for g in self.goals if g != goal)

    def neighbors(self, cell: Cell) -> Iterable[Cell]:
        r, c = cell
        for dr, dc in NEIGHBOR_OFFSETS:
            n = (r + dr, c + dc)
            if self.in_bounds(n):
                yield n

    def with_blocked(self, blocked: Iterable[Cell]) -> "GridEnvironment":
        return replace(self, blocked=frozenset(blocked))

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "start": list(self.start),
            "goals": [list(g) for g in self.goals],
            "blocked": sorted([list(c) for c in self.blocked]),
            "subgoal_rewards": [[r, c, v] for (r, c), v in self.subgoal_rewards],
            "goal_reward": self.goal_reward,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "GridEnvironment":
        return cls(
            width=int(data["width"]),
            height=int(data["height"]),
            start=tuple(data["start"]),
            goals=tuple(tuple(g) for g in data["goals"]),
            blocked=frozenset(tuple(c) for c in data.get("blocked", ())),
            subgoal_rewards=tuple(
                ((int(r), int(c)), float(v)) for r, c, v in data.get("subgoal_rewards", ())
            ),
            goal_reward=float(data.get("goal_reward", 1.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GridEnvironment":
        return cls.from_dict(json.loads(text))

    def render(self) -> str:
        subs = self.subgoals
        rows = []
        for r in range(self.height):
            line = []
            for c in range(self.width):
                cell = (r, c)
                if cell == self.start:
                    line.append("S")
                elif cell in self.goals:
                    line.append(str(self.goals.index(cell)))
                elif cell in self.blocked:
                    line.append("x")
                elif cell in subs:
                    line.append("*")
                else:
                    line.append(".")
            rows.append("".join(line))
        return "\n".join(rows)


def _cell(value) -> Cell:
    r, c = value
    return int(r), int(c)


def load_environment(path: str | Path) -> GridEnvironment:
    return GridEnvironment.from_json(Path(path).read_text())


def save_environment(env: GridEnvironment, path: str | Path) -> None:
    Path(path).write_text(env.to_json() + "\n")


# validity -----------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    cell: Cell | None = None

    def __str__(self) -> str:
        return self.kind if self.cell is None else f"{self.kind} at {self.cell}"


@dataclass(frozen=True)
class ValidityReport:
    ok: bool
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return self.ok

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def reachable_set(
    env: GridEnvironment, source: Cell, extra_blocked: Iterable[Cell] = ()
) -> set[Cell]:
    """Cells reachable from ``source`` by 4-neighbour moves over free cells."""
    source = _cell(source)
    walls = set(env.blocked)
    walls.update(_cell(c) for c in extra_blocked)
    if not env.in_bounds(source) or source in walls:
        raise PreconditionError(f"source {source} is out of bounds or blocked")
    seen = {source}
    stack = [source]
    while stack:
        cell = stack.pop()
        for n in env.neighbors(cell):
            if n not in walls and n not in seen:
                seen.add(n)
                stack.append(n)
    return seen


def validate(env: GridEnvironment) -> ValidityReport:
    out: list[Violation] = []
    if env.width < 1 or env.height < 1:
        return ValidityReport(False, (Violation("non-positive dimensions"),))
    if len(env.goals) < 2:
        out.append(Violation("fewer than two goals"))
    if not env.in_bounds(env.start):
        out.append(Violation("start out of bounds", env.start))
    elif env.start in env.blocked:
        out.append(Violation("start blocked", env.start))
    for c in env.blocked:
        if not env.in_bounds(c):
            out.append(Violation("blocked cell out of bounds", c))
    seen: set[Cell] = set()
    for g in env.goals:
        if not env.in_bounds(g):
            out.append(Violation("goal out of bounds", g))
        elif g in env.blocked:
            out.append(Violation("goal blocked", g))
        if g in seen:
            out.append(Violation("duplicate goal", g))
        if g == env.start:
            out.append(Violation("goal equals start", g))
        seen.add(g)
    if env.goal_reward <= 0:
        out.append(Violation("non-positive goal reward"))
    for cell, value in env.subgoal_rewards:
        if not env.in_bounds(cell) or cell in env.blocked:
            out.append(Violation("subgoal on blocked cell", cell))
        if cell == env.start or cell in env.goals:
            out.append(Violation("subgoal on start or goal", cell))
        if value < 0:
            out.append(Violation("negative subgoal reward", cell))
        if value > env.goal_reward / 10 + 1e-12:
            out.append(Violation("subgoal reward too large", cell))
    structural = {"start out of bounds", "start blocked", "goal out of bounds", "goal blocked"}
    if not any(v.kind in structural for v in out):
        for g in env.goals:
            if g == env.start:
                continue
            reach = reachable_set(env, env.start, env.other_goals(g))
            if g not in reach:
                out.append(Violation("goal unreachable", g))
    return ValidityReport(not out, tuple(out))


def is_valid(env: GridEnvironment) -> bool:
    return validate(env).ok


# modifications ------------------------------------------------------------


class ModKind(str, Enum):
    BLOCK = "block"
    UNBLOCK = "unblock"


@dataclass(frozen=True, order=True)
class Modification:
    cell: Cell
    kind: ModKind

    @classmethod
    def block(cls, cell: Cell) -> "Modification":
        return cls(_cell(cell), ModKind.BLOCK)

    @classmethod
    def unblock(cls, cell: Cell) -> "Modification":
        return cls(_cell(cell), ModKind.UNBLOCK)

    def sort_key(self) -> tuple[int, int, int]:
        # lexicographic (row, col), Block before Unblock
        return self.cell[0], self.cell[1], 0 if self.kind is ModKind.BLOCK else 1

    def __str__(self) -> str:
        return f"{self.kind.value}{self.cell}"


def apply(env: GridEnvironment, mod: Modification) -> GridEnvironment:
    cell = mod.cell
    if not env.in_bounds(cell):
        raise InvalidModification(f"{mod}: cell out of bounds")
    if cell == env.start or cell in env.goals:
        raise InvalidModification(f"{mod}: start and goal cells are immutable")
    if mod.kind is ModKind.BLOCK:
        if cell in env.blocked:
            raise InvalidModification(f"{mod}: cell already blocked")
        blocked = env.blocked | {cell}
        subs = tuple((c, v) for c, v in env.subgoal_rewards if c != cell)
        return replace(env, blocked=blocked, subgoal_rewards=subs)
    if cell not in env.blocked:
        raise InvalidModification(f"{mod}: cell is not blocked")
    return replace(env, blocked=env.blocked - {cell})


def apply_all(env: GridEnvironment, mods: Iterable[Modification]) -> GridEnvironment:
    for mod in mods:
        env = apply(env, mod)
    return env


def candidate_modifications(
    env: GridEnvironment, allow_block: bool = True, allow_unblock: bool = True
) -> list[Modification]:
    """All structurally legal single edits, in deterministic tie-break order."""
    fixed = {env.start, *env.goals}
    mods = []
    for cell in env.cells():
        if cell in fixed:
            continue
        if cell in env.blocked:
            if allow_unblock:
                mods.append(Modification.unblock(cell))
        elif allow_block:
            mods.append(Modification.block(cell))
    return mods


@dataclass(frozen=True)
class CostVector:
    blocks_added: int = 0
    blocks_removed: int = 0

    @property
    def total(self) -> int:
        return self.blocks_added + self.blocks_removed

    def as_tuple(self) -> tuple[int, int]:
        return self.blocks_added, self.blocks_removed


def cost(original: GridEnvironment, modified: GridEnvironment) -> CostVector:
    if (
        original.shape != modified.shape
        or original.start != modified.start
        or original.goals != modified.goals
    ):
        raise PreconditionError("environments differ in geometry, start or goals")
    return CostVector(
        len(modified.blocked - original.blocked),
        len(original.blocked - modified.blocked),
    )


# generation ---------------------------------------------------------------


@dataclass(frozen=True)
class GenerationConfig:
    width: int = 6
    height: int = 6
    max_blocked: int | None = None
    goal_count: int = 2
    subgoal_count: int = 0
    subgoal_reward_range: tuple[float, float] = (0.05, 0.3)
    seed: int = 0

    @property
    def blocked_bound(self) -> int:
        return 2 * self.width if self.max_blocked is None else self.max_blocked

    def check(self) -> None:
        free = self.width * self.height - (1 + self.goal_count)
        if self.blocked_bound < 0 or self.blocked_bound > free:
            raise PreconditionError(f"max_blocked must lie in [0, {free}]")
        if self.goal_count < 2 or self.goal_count > 2 * self.height:
            raise PreconditionError("goal_count must fit in the last two columns")
        if self.subgoal_count < 0:
            raise PreconditionError("subgoal_count must be non-negative")


def random_environment(
    config: GenerationConfig, rng: np.random.Generator | None = None
) -> GridEnvironment:
    """Draw a valid environment.

    The blocked count is drawn once and layouts are resampled for that count,
    so rejection does not skew the count distribution.
    """
    config.check()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    w, h = config.width, config.height
    n_blocked = int(rng.integers(0, config.blocked_bound + 1))
    goal_cols = [c for c in (w - 2, w - 1) if c >= 0]
    goal_pool = [(r, c) for c in goal_cols for r in range(h)]
    for _ in range(MAX_REJECTIONS):
        start = (int(rng.integers(h)), 0)
        pool = [g for g in goal_pool if g != start]
        picks = rng.choice(len(pool), size=config.goal_count, replace=False)
        goals = tuple(pool[i] for i in picks)
        fixed = {start, *goals}
        rest = [cell for cell in _all_cells(w, h) if cell not in fixed]
        if n_blocked + config.subgoal_count > len(rest):
            raise PreconditionError("too many blocked and subgoal cells for grid")
        order = rng.permutation(len(rest))
        blocked = frozenset(rest[i] for i in order[:n_blocked])
        subs: tuple = ()
        goal_reward = 1.0
        if config.subgoal_count:
            sub_cells = [rest[i] for i in order[n_blocked : n_blocked + config.subgoal_count]]
            lo, hi = config.subgoal_reward_range
            values = rng.uniform(lo, hi, size=len(sub_cells))
            subs = tuple(zip(sub_cells, (float(v) for v in values)))
            goal_reward = 10.0 * float(values.max())
        env = GridEnvironment(
            width=w,
            height=h,
            start=start,
            goals=goals,
            blocked=blocked,
            subgoal_rewards=subs,
            goal_reward=goal_reward,
        )
        if validate(env).ok:
            return env
    raise GenerationExhausted(f"no valid environment after {MAX_REJECTIONS} draws")


def random_environments(config: GenerationConfig, count: int) -> list[GridEnvironment]:
    rng = np.random.default_rng(config.seed)
    return [random_environment(config, rng) for _ in range(count)]


def _all_cells(w: int, h: int) -> list[Cell]:
    return [(r, c) for r in range(h) for c in range(w)]
