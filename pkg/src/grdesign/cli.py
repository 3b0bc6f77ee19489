"""Command-line entry point: ``grdesign <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .agents import LearnedPolicy, Planner, parse_discount
from .datagen import EncodingSpec, ParamRangeSampler, generate_dataset, load_dataset, save_dataset
from .design import LAMBDA_GRID, BudgetSpec
from .env import GenerationConfig, GridEnvironment, GridError, random_environments
from .harness import (
    ConfigError,
    EmptyReport,
    ExperimentConfig,
    read_rows,
    report_frontier,
    run_experiment,
    time_compare,
    write_frontier,
    write_rows,
    write_timing,
)
from .inference import evaluate_inference, infer_goal
from .nn import Network, TrainConfig, load_model, save_model, train, wcd_network_spec

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 2, 3

log = logging.getLogger("grdesign")


def _out(args, name: str) -> Path:
    path = Path(name)
    if not path.is_absolute():
        path = Path(args.out_dir) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{path} does not exist")
    return p


def read_envs(path: str) -> list[GridEnvironment]:
    """A single environment JSON or JSONL with one environment per line."""
    text = _existing(path).read_text().strip()
    try:
        return [GridEnvironment.from_dict(json.loads(text))]
    except json.JSONDecodeError:
        return [GridEnvironment.from_json(line) for line in text.splitlines() if line.strip()]


def _budget(args) -> BudgetSpec:
    if args.budget_mode == "blocking":
        return BudgetSpec.blocking(args.budget)
    if args.budget_mode == "shared":
        return BudgetSpec.shared(args.budget)
    block = args.block_budget if args.block_budget is not None else 5 * args.budget
    return BudgetSpec.individual(block, args.budget)


def _agent_sampler(text: str):
    """``hyperbolic:0-10`` draws k uniformly per sample; anything else is fixed."""
    kind, _, value = text.partition(":")
    if "-" in value.strip("-"):
        lo, hi = value.split("-", 1)
        return ParamRangeSampler(kind, float(lo), float(hi))
    return Planner(parse_discount(text))


# subcommands ------------------------------------------------------------------


def cmd_gen_envs(args) -> int:
    gen = GenerationConfig(args.size, args.size, args.max_blocked, args.goals, args.subgoals, seed=args.seed)
    envs = random_environments(gen, args.count)
    path = _out(args, args.out)
    path.write_text("".join(e.to_json() + "\n" for e in envs))
    log.info("wrote %d environments to %s", len(envs), path)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    gen = GenerationConfig(args.size, args.size, args.max_blocked, args.goals, args.subgoals, seed=args.seed)
    ds = generate_dataset(gen, _agent_sampler(args.agent), args.count, args.seed, args.jobs)
    path = _out(args, args.out)
    save_dataset(ds, path)
    print(json.dumps(ds.summary()))
    return EXIT_OK


def cmd_train(args) -> int:
    ds = load_dataset(_existing(args.data))
    channels, size = ds.x.shape[1], ds.x.shape[2]
    net = Network(wcd_network_spec(channels, size), seed=args.seed)
    config = TrainConfig(args.lr, args.epochs, args.batch_size, seed=args.seed)
    report = train(net, ds.x, ds.y, config, log=log.info)
    spec = EncodingSpec(size, channels - 4)
    meta = {"layout": spec.layout(), "layout_hash": spec.layout_hash(), "report": report.to_dict()}
    save_model(net, _out(args, args.out), meta)
    print(json.dumps({"best_val_loss": report.best_val_loss, "best_epoch": report.best_epoch}))
    return EXIT_OK


def _experiment(args, methods) -> ExperimentConfig:
    return ExperimentConfig(
        size=args.size,
        agent=args.agent,
        methods=tuple(methods),
        budget=_budget(args),
        lambda_grid=tuple(args.lambda_grid),
        lambdas=tuple(args.lambdas) if args.lambdas else None,
        env_count=args.count,
        model_path=args.model,
        seed=args.seed,
        out_dir=args.out_dir,
        subgoal_count=args.subgoals,
    )


def _run_design(args, methods) -> int:
    config = _experiment(args, methods)
    envs = read_envs(args.env) if args.env else None
    rows, summary = run_experiment(config, args.jobs, envs)
    write_rows(rows, _out(args, args.out))
    print(json.dumps(summary.to_dict()))
    return EXIT_PARTIAL if summary.failures else EXIT_OK


def cmd_design(args) -> int:
    return _run_design(args, [args.method])


def cmd_baseline(args) -> int:
    return _run_design(args, args.methods.split(","))


def _behavior_model(spec: str):
    path = Path(spec)
    if path.exists():
        net, _ = load_model(path)
        return LearnedPolicy(net)
    return Planner(parse_discount(spec))


def cmd_infer(args) -> int:
    envs = read_envs(args.env)
    model = _behavior_model(args.model)
    out = _out(args, args.out)
    if args.obs:
        steps: dict[tuple[int, int], list] = {}
        for line in _existing(args.obs).read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                steps.setdefault((rec["env_id"], rec["goal_index"]), []).append(rec)
        with out.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["env_id", "goal_index", "observed", "posterior"])
            for (env_id, goal_index), recs in sorted(steps.items()):
                recs.sort(key=lambda r: r["t"])
                obs = [(tuple(r["cell"]), r["action"]) for r in recs]
                post = infer_goal(envs[env_id], model, obs)
                writer.writerow([env_id, goal_index, len(obs), ";".join(f"{p:.6g}" for p in post.probabilities)])
        return EXIT_OK
    walker = _behavior_model(args.walker) if args.walker else model
    points = evaluate_inference(envs, walker, model, args.fractions)
    with out.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "mean", "stderr"])
        for p in points:
            writer.writerow([p.fraction, f"{p.mean:.6g}", f"{p.stderr:.6g}"])
    return EXIT_OK


def cmd_time(args) -> int:
    config = _experiment(args, args.methods.split(","))
    if config.lambdas is None:
        config.lambdas = (0.0,) * (2 if config.budget.mode == "individual" else 1)
    envs = read_envs(args.env) if args.env else None
    rows = time_compare(config, envs, repeats=args.repeats)
    write_timing(rows, _out(args, args.out))
    for r in rows:
        print(f"{r.method}: mean {r.mean:.4f}s +- {r.stderr:.4f} median {r.median:.4f}s (n={r.n})")
    return EXIT_OK


def cmd_report(args) -> int:
    frontier = report_frontier(read_rows(_existing(args.rows)))
    write_frontier(frontier, _out(args, args.out))
    return EXIT_OK


# parser -----------------------------------------------------------------------


def _design_flags(p: argparse.ArgumentParser, default_out: str) -> None:
    p.add_argument("--env", help="environment JSON or JSONL (default: generate --count envs)")
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--subgoals", type=int, default=0)
    p.add_argument("--agent", default="optimal", help="optimal | geometric:G | hyperbolic:K")
    p.add_argument("--budget-mode", choices=["blocking", "shared", "individual"], default="blocking")
    p.add_argument("--budget", type=int, default=3, help="budget; unblock budget in individual mode")
    p.add_argument("--block-budget", type=int, help="individual mode block budget (default 5x unblock)")
    p.add_argument("--lambda-grid", type=float, nargs="+", default=list(LAMBDA_GRID))
    p.add_argument("--lambdas", type=float, nargs="+", help="single multiplier vector instead of a sweep")
    p.add_argument("--model", help="trained wcd surrogate checkpoint")
    p.add_argument("--out", default=default_out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grdesign", description="Goal recognition design experiments")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out-dir", default=".")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-envs", help="sample random valid environments")
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--goals", type=int, default=2)
    p.add_argument("--subgoals", type=int, default=0)
    p.add_argument("--max-blocked", type=int)
    p.add_argument("--out", default="envs.jsonl")
    p.set_defaults(func=cmd_gen_envs)

    p = sub.add_parser("gen-data", help="label random environments with their true wcd")
    p.add_argument("--size", "--grid", type=int, default=6)
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--goals", type=int, default=2)
    p.add_argument("--subgoals", type=int, default=0)
    p.add_argument("--max-blocked", type=int)
    p.add_argument("--agent", default="optimal", help="fixed spec or a range such as hyperbolic:0-10")
    p.add_argument("--out", default="data.jsonl")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a wcd surrogate")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("design", help="run one design method")
    p.add_argument("--method", required=True, choices=["exhaustive", "pruned", "greedy-true", "greedy-pred", "gradient"])
    _design_flags(p, "design.csv")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("baseline", help="run several baseline methods")
    p.add_argument("--methods", default="exhaustive,pruned,greedy-true")
    _design_flags(p, "baseline.csv")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("infer", help="posterior goal inference")
    p.add_argument("--env", required=True)
    p.add_argument("--model", default="optimal", help="policy checkpoint or planner spec")
    p.add_argument("--obs", help="observations JSONL {env_id, goal_index, t, cell, action}")
    p.add_argument("--walker", help="walker for accuracy curves (default: the model)")
    p.add_argument("--fractions", type=float, nargs="+", default=[0.1, 0.25, 0.5, 0.75, 1.0])
    p.add_argument("--out", default="inference.csv")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("time", help="per-environment design time comparison")
    p.add_argument("--methods", default="greedy-true,gradient")
    p.add_argument("--repeats", type=int, default=1, help="median over this many repeats per env")
    _design_flags(p, "timing.csv")
    p.set_defaults(func=cmd_time)

    p = sub.add_parser("report", help="frontier CSV from report rows")
    p.add_argument("--rows", required=True)
    p.add_argument("--out", default="frontier.csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, EmptyReport, GridError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
