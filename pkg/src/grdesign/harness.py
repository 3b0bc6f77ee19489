"""Experiment orchestration, report rows, frontier reports and timing."""
from __future__ import annotations

import csv
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

from .agents import AgentModel, Planner, parse_discount
from .design import (
    LAMBDA_GRID,
    BudgetSpec,
    DesignOutcome,
    LagrangianConfig,
    NetSurrogate,
    SweepEntry,
    exhaustive_search,
    gradient_optimize,
    greedy,
    lambda_sweep,
    pruned_reduce,
)
from .env import GenerationConfig, GridEnvironment, random_environments
from .nn import load_model

METHODS = ("exhaustive", "pruned", "greedy-true", "greedy-pred", "gradient")
SURROGATE_METHODS = {"greedy-pred", "gradient"}


class ConfigError(ValueError):
    pass


class EmptyReport(ValueError):
    pass


@dataclass
class ExperimentConfig:
    size: int = 6
    agent: str = "optimal"
    methods: tuple[str, ...] = ("exhaustive", "greedy-true")
    budget: BudgetSpec = field(default_factory=lambda: BudgetSpec.blocking(3))
    lambda_grid: tuple[float, ...] = LAMBDA_GRID
    lambdas: tuple[float, ...] | None = None
    env_count: int = 100
    model_path: str | None = None
    seed: int = 0
    out_dir: str = "runs"
    goal_count: int = 2
    subgoal_count: int = 0
    max_blocked: int | None = None
    max_steps: int = 50
    notion: str = "auto"

    def check(self) -> None:
        if not self.methods:
            raise ConfigError("method list is empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}")
        if self.env_count < 1:
            raise ConfigError("env_count must be at least 1")
        if SURROGATE_METHODS & set(self.methods):
            if not self.model_path or not Path(self.model_path).exists():
                raise ConfigError(f"surrogate methods need a trained model, got {self.model_path!r}")
        if not self.lambda_grid:
            raise ConfigError("lambda grid is empty")
        try:
            self.planner()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def planner(self) -> Planner:
        return Planner(parse_discount(self.agent))

    def generation(self) -> GenerationConfig:
        return GenerationConfig(self.size, self.size, self.max_blocked, self.goal_count, self.subgoal_count, seed=self.seed)

    def environments(self) -> list[GridEnvironment]:
        return random_environments(self.generation(), self.env_count)

    def lagrangian(self) -> LagrangianConfig:
        mode = self.budget.mode
        n = 2 if mode == "individual" else 1
        lambdas = tuple(self.lambdas) if self.lambdas is not None else (0.0,) * n
        return LagrangianConfig(lambdas, tuple(self.lambda_grid), self.budget.budgets(), self.max_steps, mode)


@dataclass
class ReportRow:
    env_id: int
    method: str
    budget_mode: str
    realized_cost: int
    wcd_before: int
    wcd_after: int
    reduction: int
    wall_time_s: float
    nodes_or_steps: int
    blocks_added: int = 0
    blocks_removed: int = 0
    lambda_: str = ""
    error: str = ""

    @classmethod
    def from_outcome(cls, env_id: int, budget: BudgetSpec, out: DesignOutcome) -> "ReportRow":
        lam = ";".join(f"{v:g}" for v in out.lambdas) if out.lambdas is not None else ""
        return cls(
            env_id, out.method, budget.mode, out.realized_cost.total, out.wcd_before, out.wcd_after,
            out.reduction, out.wall_time, out.nodes_or_steps,
            out.realized_cost.blocks_added, out.realized_cost.blocks_removed, lam,
        )

    @classmethod
    def failure(cls, env_id: int, method: str, budget: BudgetSpec, error: Exception) -> "ReportRow":
        return cls(env_id, method, budget.mode, 0, -1, -1, 0, 0.0, 0, error=f"{type(error).__name__}: {error}")

    @property
    def ok(self) -> bool:
        return not self.error

    def problems(self, methods: Sequence[str] | None = None) -> list[str]:
        out = []
        if self.ok and self.reduction != self.wcd_before - self.wcd_after:
            out.append("reduction does not equal wcd_before - wcd_after")
        if self.realized_cost < 0 or self.blocks_added < 0 or self.blocks_removed < 0:
            out.append("negative cost")
        if self.wall_time_s < 0:
            out.append("negative wall time")
        if methods is not None and self.method not in methods:
            out.append(f"method {self.method} not configured")
        return out

    def non_timing(self) -> tuple:
        return tuple(v for k, v in asdict(self).items() if k != "wall_time_s")


COLUMNS = [f.name for f in fields(ReportRow)]
_HEADER = ["lambda" if c == "lambda_" else c for c in COLUMNS]


def write_rows(rows: Iterable[ReportRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER)
        for r in rows:
            writer.writerow([getattr(r, c) for c in COLUMNS])


def read_rows(path: str | Path) -> list[ReportRow]:
    types = {f.name: f.type for f in fields(ReportRow)}
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            values = {}
            for col, head in zip(COLUMNS, _HEADER):
                raw = rec[head]
                kind = types[col]
                values[col] = int(raw) if kind == "int" else float(raw) if kind == "float" else raw
            rows.append(ReportRow(**values))
    return rows


# running ----------------------------------------------------------------------


def _surrogate(config: ExperimentConfig) -> NetSurrogate | None:
    if not SURROGATE_METHODS & set(config.methods):
        return None
    net, _ = load_model(config.model_path)
    return NetSurrogate(net, config.planner())


def run_method(method: str, env: GridEnvironment, agent: AgentModel, budget: BudgetSpec,
               lagrangian: LagrangianConfig, surrogate=None, sweep: bool = True,
               notion: str = "auto") -> list[DesignOutcome]:
    if method == "exhaustive":
        return [exhaustive_search(env, agent, budget, notion=notion)]
    if method == "pruned":
        return [pruned_reduce(env, agent, budget, notion=notion)]
    if method == "greedy-true":
        return [greedy(env, agent, budget, notion=notion)]
    if method == "greedy-pred":
        return [greedy(env, agent, budget, scorer=surrogate, notion=notion)]
    if method == "gradient":
        if sweep:
            return [e.outcome for e in lambda_sweep(env, agent, surrogate, lagrangian, notion)]
        return [gradient_optimize(env, agent, surrogate, lagrangian, notion)]
    raise ConfigError(f"unknown method {method!r}")


def _env_rows(args) -> list[ReportRow]:
    env_id, env, config, surrogate = args
    agent = config.planner()
    lag = config.lagrangian()
    rows = []
    for method in config.methods:
        try:
            outs = run_method(method, env, agent, config.budget, lag, surrogate, config.lambdas is None, config.notion)
            rows.extend(ReportRow.from_outcome(env_id, config.budget, o) for o in outs)
        except Exception as exc:  # recorded and the run continues
            rows.append(ReportRow.failure(env_id, method, config.budget, exc))
    return rows


@dataclass
class BucketStat:
    method: str
    realized_cost: int
    mean_reduction: float
    stderr: float
    n: int


@dataclass
class Summary:
    buckets: list[BucketStat]
    mean_time: dict[str, float]
    failures: int

    def to_dict(self) -> dict:
        return {"buckets": [asdict(b) for b in self.buckets], "mean_time": self.mean_time, "failures": self.failures}


def mean_stderr(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(len(values)))


def summarize(rows: Sequence[ReportRow]) -> Summary:
    good = [r for r in rows if r.ok]
    groups: dict[tuple[str, int], list[float]] = {}
    times: dict[str, list[float]] = {}
    for r in good:
        groups.setdefault((r.method, r.realized_cost), []).append(r.reduction)
        times.setdefault(r.method, []).append(r.wall_time_s)
    buckets = [BucketStat(m, c, *mean_stderr(v), len(v)) for (m, c), v in sorted(groups.items())]
    return Summary(buckets, {m: float(np.mean(t)) for m, t in sorted(times.items())}, len(rows) - len(good))


def run_experiment(config: ExperimentConfig, jobs: int = 1,
                   envs: Sequence[GridEnvironment] | None = None) -> tuple[list[ReportRow], Summary]:
    """Run every configured method on every environment.

    Rows come back ordered by (env_id, method order), independent of ``jobs``.
    """
    config.check()
    envs = list(envs) if envs is not None else config.environments()
    surrogate = _surrogate(config)
    tasks = [(i, env, config, surrogate) for i, env in enumerate(envs)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            chunks = list(pool.map(_env_rows, tasks))
    else:
        chunks = [_env_rows(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    return rows, summarize(rows)


# reports ----------------------------------------------------------------------


@dataclass
class FrontierRow:
    realized_budget: int
    method: str
    mean_reduction: float
    stderr: float
    n: int


def report_frontier(rows: Sequence[ReportRow]) -> list[FrontierRow]:
    """Mean reduction per (method, exact realized total cost) bucket."""
    good = [r for r in rows if r.ok]
    if not good:
        raise EmptyReport("no successful rows to report")
    groups: dict[tuple[str, int], list[float]] = {}
    for r in good:
        groups.setdefault((r.method, r.realized_cost), []).append(r.reduction)
    out = [FrontierRow(c, m, *mean_stderr(v), len(v)) for (m, c), v in groups.items()]
    return sorted(out, key=lambda f: (f.method, f.realized_budget))


def write_frontier(frontier: Sequence[FrontierRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["realized_budget", "method", "mean_reduction", "stderr", "n"])
        for f in frontier:
            writer.writerow([f.realized_budget, f.method, f"{f.mean_reduction:.6g}", f"{f.stderr:.6g}", f.n])


def lambda_cost_spearman(entries: Iterable[SweepEntry]) -> float:
    """Rank correlation between the multiplier and realized total cost.

    Entries are pooled across environments; two-constraint entries use the
    multiplier sum.
    """
    pairs = [(sum(e.lambdas), e.outcome.realized_cost.total) for e in entries]
    if len(pairs) < 2:
        raise EmptyReport("need at least two sweep entries")
    lam, cost_ = zip(*pairs)
    return float(spearmanr(lam, cost_).statistic)


# timing -------------------------------------------------------------------------


@dataclass
class TimingRow:
    method: str
    mean: float
    stderr: float
    median: float
    n: int


def time_compare(config: ExperimentConfig, envs: Sequence[GridEnvironment] | None = None,
                 surrogate=None, repeats: int = 1) -> list[TimingRow]:
    """Per-environment wall time of each method with a single multiplier vector.

    The clock wraps the design call only; with ``repeats`` > 1 the median of
    the repeats is used per environment.
    """
    config.check()
    envs = list(envs) if envs is not None else config.environments()
    surrogate = surrogate if surrogate is not None else _surrogate(config)
    agent = config.planner()
    lag = config.lagrangian()
    out = []
    for method in config.methods:
        per_env = []
        for env in envs:
            samples = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                run_method(method, env, agent, config.budget, lag, surrogate, sweep=False, notion=config.notion)
                samples.append(time.perf_counter() - t0)
            per_env.append(statistics.median(samples))
        mean, se = mean_stderr(per_env)
        out.append(TimingRow(method, mean, se, float(np.median(per_env)), len(per_env)))
    return out


def write_timing(rows: Sequence[TimingRow], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "mean_s", "stderr_s", "median_s", "n"])
        for r in rows:
            writer.writerow([r.method, f"{r.mean:.6g}", f"{r.stderr:.6g}", f"{r.median:.6g}", r.n])
