"""Command line entry point.

Subcommands: gen-data, ingest-24, train, solve, eval, export-graph, replay.
Every failure prints a single-line diagnostic to stderr and exits nonzero;
argparse handles unknown flags with usage text and exit code 2.

`eval` and `replay` accept a config file of `key = value` lines (RunConfig
field names; `#` starts a comment) which individual flags override. API keys
are never flags: the client reads them from the environment (XOT_API_KEY).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields

from . import harness, thoughts, trainer
from .envs import datasets, get_task
from .errors import XotError
from .mcts import Evaluator, SearchConfig, act_sequence
from .net import PolicyValueNet

logger = logging.getLogger(__name__)


def _read_instance(task, text: str):
    if text.startswith("@"):
        with open(text[1:], encoding="utf-8") as fh:
            text = fh.read()
    return task.parse_state_text(text)


def _parse_config_value(raw: str):
    raw = raw.strip()
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for caster in (int, float):
        try:
            return caster(raw)
        except ValueError:
            pass
    if "," in raw:
        return tuple(_parse_config_value(part) for part in raw.split(","))
    return raw


def read_config_file(path: str) -> dict:
    """`key = value` lines -> dict; blank lines and # comments ignored."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise XotError(f"{path}:{line_no}: expected key = value")
            key, _, raw = line.partition("=")
            values[key.strip().replace("-", "_")] = _parse_config_value(raw)
    return values


def _seeds(value) -> tuple:
    if isinstance(value, tuple):
        return tuple(int(v) for v in value)
    if isinstance(value, int):
        return (value,)
    return tuple(int(part) for part in str(value).split(","))


def _run_config(args) -> harness.RunConfig:
    settings = {}
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        known = {f.name for f in fields(harness.RunConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise XotError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update(file_values)
    for flag, key in (
        ("task", "task"), ("mode", "mode"), ("seeds", "seeds"),
        ("simulations", "simulations"), ("exploration_weight", "exploration_weight"),
        ("revisions", "revision_rounds"),
        ("revision_simulations", "revision_simulations"),
        ("multi_samples", "multi_samples"), ("data", "dataset_path"),
        ("checkpoint", "checkpoint_path"), ("limit", "limit"),
        ("truncate_last_step", "truncate_last_step"),
        ("llm_base_url", "llm_base_url"), ("llm_model", "llm_model"),
        ("llm_transcript", "llm_transcript"), ("llm_replay", "llm_replay"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    if "seeds" in settings:
        settings["seeds"] = _seeds(settings["seeds"])
    if "task" not in settings:
        raise XotError("a task is required (flag --task or config file)")
    return harness.RunConfig(**settings)


def _cmd_gen_data(args) -> int:
    states = datasets.generate_instances(args.task, args.count, seed=args.seed)
    total, test_default = harness.DATASET_SIZES[args.task]
    n_test = args.test_size if args.test_size is not None else \
        round(args.count * test_default / total)
    splits = datasets.assign_splits(args.count, n_test, seed=args.seed)
    datasets.write_instances(args.out, args.task, states, splits)
    print(f"wrote {args.count} {args.task} instances "
          f"({args.count - n_test} train / {n_test} test) to {args.out}")
    return 0


def _cmd_ingest_24(args) -> int:
    split = harness.ingest_game24(args.csv, seed=args.seed)
    task = get_task("game24")
    with open(args.out, "w", encoding="utf-8") as fh:
        for label in ("train", "test"):
            for problem_id, state in split[label]:
                fh.write(json.dumps({"task": "game24", "id": problem_id,
                                     "state": task.format_state_text(state),
                                     "split": label}) + "\n")
    print(f"wrote {len(split['train'])} train / {len(split['test'])} test "
          f"boards to {args.out}")
    return 0


def _cmd_train(args) -> int:
    task = get_task(args.task)
    config = harness.RunConfig(task=args.task, dataset_path=args.data or "")
    problems = [state for _, state in harness.load_problems(config, args.seed)["train"]]
    overrides = {}
    for name in ("iterations", "episodes_per_iteration", "simulations",
                 "learning_rate", "momentum", "epochs", "batch_size",
                 "temperature", "exploration_weight", "problem_sampling"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    plan = trainer.plan_for(args.task, seed=args.seed, **overrides)
    log_file = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        _, metrics = trainer.run_training(task, problems, plan,
                                          checkpoint_path=args.out,
                                          log_file=log_file)
    finally:
        if log_file:
            log_file.close()
    for record in metrics:
        print(f"iteration {record['iteration']}: {record['samples']} samples, "
              f"loss {record['mean_loss']:.4f}, {record['ftheta_calls']} ftheta calls")
    print(f"saved checkpoint to {args.out}")
    return 0


def _solve_search_config(args, task) -> SearchConfig:
    return SearchConfig(
        simulations=args.simulations or task.default_simulations,
        exploration_weight=args.exploration_weight or task.default_exploration_weight,
        seed=args.seed)


def _cmd_solve(args) -> int:
    task = get_task(args.task)
    problem = _read_instance(task, args.instance)
    network = PolicyValueNet.load_checkpoint(args.checkpoint,
                                                     expect_task=args.task)
    search = _solve_search_config(args, task)
    if args.multi:
        import numpy as np
        thought = thoughts.extract_multi(
            task, problem, network, config=search,
            samples=args.samples or task.default_multi_samples,
            rng=np.random.default_rng(args.seed))
        trajectories = thought.trajectories
    else:
        episode = act_sequence(task, problem, network, search, select="argmax",
                               evaluator=Evaluator(network, cache=True))
        trajectory = thoughts.extract_single(task, episode)
        if args.revisions and not trajectory.solved():
            from . import revision
            config = revision.RevisionConfig(
                max_rounds=args.revisions,
                simulations=task.default_revision_simulations,
                exploration_weight=search.exploration_weight)
            thought_set = thoughts.ThoughtSet(task.name, [trajectory], counts=[1])
            revised, _ = revision.revise_loop(task, problem, thought_set,
                                              revision.OracleCritic(task),
                                              network, config)
            trajectory = revised.trajectories[0]
        thought = trajectory
        trajectories = [trajectory]
    if args.truncate_last_step:
        shortened = [thoughts.ThoughtTrajectory(task.name, list(t.steps),
                                                complete=False)
                     for t in trajectories]
        rendered = "\n\n".join(thoughts.render_prompt(task, t) for t in shortened)
    else:
        rendered = thoughts.render_prompt(task, thought)
    print(rendered)
    solved = [t.solved() for t in trajectories]
    print(f"solved: {', '.join('yes' if s else 'no' for s in solved)}")
    return 0


def _cmd_eval(args) -> int:
    config = _run_config(args)
    report = harness.evaluate(config)
    rendered = harness.render_report(report, "json" if args.json else "text")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(harness.report_json(report) + "\n")
        print(f"wrote report to {args.out}")
    print(rendered, end="" if rendered.endswith("\n") else "\n")
    return 0


def _cmd_export_graph(args) -> int:
    task = get_task(args.task)
    problem = _read_instance(task, args.instance)
    network = PolicyValueNet.load_checkpoint(args.checkpoint,
                                                     expect_task=args.task)
    search = _solve_search_config(args, task)
    if args.multi:
        import numpy as np
        thought = thoughts.extract_multi(
            task, problem, network, config=search,
            samples=args.samples or task.default_multi_samples,
            rng=np.random.default_rng(args.seed))
    else:
        episode = act_sequence(task, problem, network, search, select="argmax",
                               evaluator=Evaluator(network, cache=True))
        thought = thoughts.extract_single(task, episode)
    dot = thoughts.export_dot(task, thought)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dot)
        print(f"wrote DOT graph to {args.out}")
    else:
        print(dot)
    return 0


def _cmd_replay(args) -> int:
    args.mode = "xot"
    args.llm_replay = args.transcript
    return _cmd_eval(args)


def _add_eval_flags(parser, with_mode=True):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--task", choices=sorted(harness.DATASET_SIZES))
    if with_mode:
        parser.add_argument("--mode", choices=harness.MODES)
    parser.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
    parser.add_argument("--simulations", type=int)
    parser.add_argument("--exploration-weight", type=float,
                        dest="exploration_weight")
    parser.add_argument("--revisions", type=int)
    parser.add_argument("--revision-simulations", type=int,
                        dest="revision_simulations")
    parser.add_argument("--multi-samples", type=int, dest="multi_samples")
    parser.add_argument("--data", help="dataset path (CSV for game24, JSONL otherwise)")
    parser.add_argument("--checkpoint", help="checkpoint path; may contain {seed}")
    parser.add_argument("--limit", type=int)
    parser.add_argument("--truncate-last-step", action="store_const", const=True,
                        default=None, dest="truncate_last_step")
    parser.add_argument("--llm-base-url", dest="llm_base_url")
    parser.add_argument("--llm-model", dest="llm_model")
    parser.add_argument("--llm-transcript", dest="llm_transcript",
                        help="record LLM calls to this JSONL file")
    parser.add_argument("--json", action="store_true", help="print the JSON report")
    parser.add_argument("--out", help="also write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xot",
                                     description="Thought generation with MCTS")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate and split task instances")
    p.add_argument("--task", required=True, choices=("puzzle8", "cube"))
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-size", type=int, dest="test_size")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("ingest-24", help="split the ranked Game of 24 CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest_24)

    p = sub.add_parser("train", help="self-play training")
    p.add_argument("--task", required=True, choices=sorted(harness.DATASET_SIZES))
    p.add_argument("--data", help="dataset path; omit to generate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="JSONL iteration log")
    p.add_argument("--iterations", type=int)
    p.add_argument("--episodes-per-iteration", type=int,
                   dest="episodes_per_iteration")
    p.add_argument("--simulations", type=int)
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--momentum", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--temperature", type=float)
    p.add_argument("--exploration-weight", type=float, dest="exploration_weight")
    p.add_argument("--problem-sampling", choices=("uniform", "balanced"),
                   dest="problem_sampling")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--task", required=True, choices=sorted(harness.DATASET_SIZES))
    p.add_argument("--instance", required=True,
                   help="state text, or @file to read it from a file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=("mcts-only",), default="mcts-only")
    p.add_argument("--revisions", type=int, default=0)
    p.add_argument("--simulations", type=int, default=0)
    p.add_argument("--exploration-weight", type=float, default=0.0,
                   dest="exploration_weight")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multi", action="store_true")
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--truncate-last-step", action="store_true",
                   dest="truncate_last_step")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("eval", help="run the evaluation harness")
    _add_eval_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("export-graph", help="DOT graph of extracted thoughts")
    p.add_argument("--task", required=True, choices=sorted(harness.DATASET_SIZES))
    p.add_argument("--instance", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--simulations", type=int, default=0)
    p.add_argument("--exploration-weight", type=float, default=0.0,
                   dest="exploration_weight")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multi", action="store_true")
    p.add_argument("--samples", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_export_graph)

    p = sub.add_parser("replay", help="re-run an eval from a recorded transcript")
    p.add_argument("--transcript", required=True)
    _add_eval_flags(p, with_mode=False)
    p.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except XotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
