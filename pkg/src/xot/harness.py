"""End-to-end evaluation: dataset plumbing, the per-problem pipelines
(search only, search plus revision, LLM solve, multi-solution), metric
aggregation, and report rendering.
"""

from __future__ import annotations

import io
import json
import logging
import os
import statistics
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import llm_client, revision, thoughts
from .envs import datasets, game24, get_task
from .errors import (AnswerParseError, CheckpointError, ContractError,
                     IllegalMoveError, ProtocolError, StateParseError,
                     TrajectoryValidationError, TransportError)
from .mcts import Evaluator, SearchConfig, act_sequence
from .net import PolicyValueNet

logger = logging.getLogger(__name__)

MODES = ("mcts-only", "revise-oracle", "xot", "multi")

GAME24_ROWS = 1362
DATASET_SIZES = {"game24": (GAME24_ROWS, 137), "puzzle8": (419, 119),
                 "cube": (1183, 183)}


@dataclass
class RunConfig:
    """Everything a run needs; defaults follow the paper's per-task settings."""

    task: str
    mode: str = "mcts-only"
    seeds: tuple = (0,)
    simulations: int = 0            # 0: task default (200 / 20 / 20)
    exploration_weight: float = 0.0  # 0: task default
    revision_rounds: int = 0        # r
    revision_simulations: int = 0   # 0: task default L (500 / 50 / 500)
    multi_samples: int = 0          # 0: task default M
    max_solutions: int = 3
    dataset_path: str = ""          # game24 CSV or a JSONL instance file
    checkpoint_path: str = ""       # may contain {seed}
    truncate_last_step: bool = False
    limit: int = 0                  # cap test problems, 0 = all
    llm_base_url: str = ""
    llm_model: str = ""
    llm_transcript: str = ""        # record here when set
    llm_replay: str = ""            # replay from here when set

    def __post_init__(self):
        if self.task not in DATASET_SIZES:
            raise ContractError(f"unknown task {self.task!r}")
        if self.mode not in MODES:
            raise ContractError(f"unknown mode {self.mode!r}")
        if not self.seeds:
            raise ContractError("at least one seed is required")
        if self.revision_rounds < 0 or self.limit < 0:
            raise ContractError("revision_rounds and limit must be >= 0")


@dataclass
class EvalReport:
    task: str
    mode: str
    config: dict
    records: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)


def ingest_game24(csv_path: str, seed: int = 0, test_size: int = 137) -> dict:
    """Rank-ordered CSV -> train/test splits of Game of 24 boards.

    Rows are four integers, easiest problem first. The split is seeded and
    stratified across rank quartiles so the test set covers every difficulty
    band. Unsolvable rows are excluded with a warning; a surprising row count
    warns but does not fail.
    """
    boards = []
    with open(csv_path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            values = tuple(int(tok) for tok in line.split(","))
            if len(values) != 4:
                raise ContractError(f"line {line_no}: expected 4 numbers, got {len(values)}")
            boards.append(values)
    if len(boards) != GAME24_ROWS:
        logger.warning("expected %d rows in %s, found %d", GAME24_ROWS, csv_path,
                       len(boards))
    usable = []
    for rank, values in enumerate(boards):
        if game24.solvable_24(values)[0]:
            usable.append((rank, values))
        else:
            logger.warning("row %d %s cannot reach 24; excluded", rank + 1, values)
    if test_size >= len(usable):
        raise ContractError(f"cannot hold out {test_size} of {len(usable)} boards")

    quartiles = np.array_split(np.arange(len(usable)), 4)
    quotas = [test_size * len(q) / len(usable) for q in quartiles]
    take = [int(q) for q in quotas]
    for _ in range(test_size - sum(take)):
        fractions = [quota - t for quota, t in zip(quotas, take)]
        take[int(np.argmax(fractions))] += 1

    rng = np.random.default_rng(seed)
    test_positions = set()
    for quartile, count in zip(quartiles, take):
        picks = rng.choice(len(quartile), size=count, replace=False)
        test_positions.update(int(quartile[p]) for p in picks)

    split = {"train": [], "test": []}
    for position, (rank, values) in enumerate(usable):
        label = "test" if position in test_positions else "train"
        split[label].append((f"game24-{rank:04d}", game24.new_state(values)))
    return split


def load_problems(config: RunConfig, seed: int) -> dict:
    """Train/test problem lists [(id, state)] for one seed."""
    task_name = config.task
    total, test_size = DATASET_SIZES[task_name]
    if task_name == "game24":
        path = config.dataset_path or os.path.join("data", "game24.csv")
        return ingest_game24(path, seed=seed, test_size=test_size)
    if config.dataset_path:
        return {label: datasets.read_instances(config.dataset_path, split=label)
                for label in ("train", "test")}
    states = datasets.generate_instances(task_name, total, seed=seed)
    labels = datasets.assign_splits(total, test_size, seed=seed)
    split = {"train": [], "test": []}
    for index, (state, label) in enumerate(zip(states, labels)):
        split[label].append((f"{task_name}-{index:04d}", state))
    return split


def _load_network(config: RunConfig, seed: int) -> PolicyValueNet:
    if not config.checkpoint_path:
        raise CheckpointError("no checkpoint path configured")
    path = config.checkpoint_path.replace("{seed}", str(seed))
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint {path} does not exist")
    return PolicyValueNet.load_checkpoint(path)


def _search_config(task, config: RunConfig) -> SearchConfig:
    weight = config.exploration_weight or task.default_exploration_weight
    return SearchConfig(simulations=config.simulations or task.default_simulations,
                        exploration_weight=weight)


def _llm(config: RunConfig):
    llm_config = llm_client.LlmConfig(base_url=config.llm_base_url,
                                      model=config.llm_model)
    return llm_client.LlmClient(llm_config,
                                transcript_path=config.llm_transcript or None,
                                replay_from=config.llm_replay or None)


def _revise(task, problem, thought_set, critic, network, config: RunConfig):
    """Run the revision loop and pull the round-1 detection flag out of its log."""
    rev_config = revision.RevisionConfig(
        max_rounds=config.revision_rounds,
        simulations=config.revision_simulations or task.default_revision_simulations,
        exploration_weight=config.exploration_weight or task.default_exploration_weight)
    sink = io.StringIO()
    revised, counters = revision.revise_loop(task, problem, thought_set, critic,
                                             network, rev_config, log_file=sink)
    entries = [json.loads(line) for line in sink.getvalue().splitlines()]
    first_round = [e for e in entries if e["round"] == 1 and e["trajectory"] == 0]
    detected = bool(first_round
                    and first_round[0]["verdict"] in ("wrong_step", "all_wrong"))
    rounds_used = max((e["round"] for e in entries
                       if e["verdict"] in ("wrong_step", "all_wrong")), default=0)
    return revised, counters, detected, rounds_used


def _evaluate_problem(task, problem_id, problem, network, config: RunConfig,
                      client=None, rng=None):
    """One problem through the configured pipeline; returns a record dict."""
    record = {
        "id": problem_id,
        "problem": task.format_state_text(problem),
        "solved": [],
        "solved_before_revision": None,
        "llm_calls": 0,
        "ftheta_calls": 0,
        "revision_rounds": 0,
        "detected": None,
        "error": None,
    }
    search = _search_config(task, config)

    if config.mode == "multi":
        thought_set = thoughts.extract_multi(
            task, problem, network, config=search,
            samples=config.multi_samples or task.default_multi_samples,
            max_solutions=config.max_solutions, rng=rng)
        record["ftheta_calls"] = thought_set.ftheta_calls
        record["solved"] = [t.solved() for t in thought_set.trajectories]
        record["solutions"] = len(thought_set.trajectories)
        return record

    evaluator = Evaluator(network, cache=True)
    episode = act_sequence(task, problem, network, search, select="argmax",
                           evaluator=evaluator)
    trajectory = thoughts.extract_single(task, episode)
    record["ftheta_calls"] = episode.ftheta_calls
    record["solved_before_revision"] = trajectory.solved()
    thought_set = thoughts.ThoughtSet(task.name, [trajectory], counts=[1])

    if config.mode == "revise-oracle" and config.revision_rounds > 0:
        critic = revision.OracleCritic(task)
        thought_set, counters, detected, rounds = _revise(
            task, problem, thought_set, critic, network, config)
        record["ftheta_calls"] += counters["ftheta_calls"]
        record["detected"] = detected
        record["revision_rounds"] = rounds

    if config.mode in ("mcts-only", "revise-oracle"):
        record["solved"] = [t.solved() for t in thought_set.trajectories]
        return record

    # mode "xot": optional LLM critic revision, then one LLM solve call
    if client is None:
        raise ContractError("xot mode needs an LLM client")
    llm_before = client.invocations()
    try:
        if config.revision_rounds > 0:
            critic = llm_client.LlmCritic(client, task, model=config.llm_model)
            thought_set, counters, detected, rounds = _revise(
                task, problem, thought_set, critic, network, config)
            record["ftheta_calls"] += counters["ftheta_calls"]
            record["detected"] = detected
            record["revision_rounds"] = rounds
        final = thought_set.trajectories[0]
        if config.truncate_last_step:
            final = thoughts.ThoughtTrajectory(task.name, list(final.steps),
                                               complete=False)
        prompt_text = thoughts.render_prompt(task, final)
        request = llm_client.build_solve_prompt(task, prompt_text,
                                                model=config.llm_model)
        reply = client.complete(request, purpose="solve")
        answered = thoughts.parse_trajectory(task, reply, problem)
        record["solved"] = [answered.solved()]
    except (TransportError, ProtocolError, AnswerParseError,
            TrajectoryValidationError, StateParseError, IllegalMoveError) as exc:
        record["solved"] = record["solved"] or [False]
        record["error"] = f"{type(exc).__name__}: {exc}"
        logger.warning("problem %s failed: %s", problem_id, exc)
    record["llm_calls"] = client.invocations() - llm_before
    return record


def evaluate(config: RunConfig) -> EvalReport:
    """Run the configured pipeline over every seed's test split."""
    task = get_task(config.task)
    report = EvalReport(task=config.task, mode=config.mode, config=asdict(config))
    per_seed_acc = []
    per_seed_acc_before = []
    for seed in config.seeds:
        network = _load_network(config, seed)
        problems = load_problems(config, seed)["test"]
        if config.limit:
            problems = problems[:config.limit]
        client = _llm(config) if config.mode == "xot" else None
        started = time.time()
        seed_records = []
        for index, (problem_id, problem) in enumerate(problems):
            rng = np.random.default_rng([seed, index])
            record = _evaluate_problem(task, problem_id, problem, network,
                                       config, client=client, rng=rng)
            record["seed"] = seed
            seed_records.append(record)
        elapsed = time.time() - started
        report.records.extend(seed_records)
        solved_any = [any(r["solved"]) for r in seed_records]
        per_seed_acc.append(100.0 * np.mean(solved_any) if seed_records else None)
        if config.revision_rounds > 0 and seed_records:
            before = [bool(r["solved_before_revision"]) for r in seed_records]
            per_seed_acc_before.append(100.0 * np.mean(before))
        if client is not None:
            audited = sum(r["llm_calls"] for r in seed_records)
            if audited != client.invocations():
                raise ContractError(
                    f"LLM counter audit failed: records say {audited}, "
                    f"client says {client.invocations()}")
        logger.info("seed %d: %d problems in %.1fs", seed, len(seed_records), elapsed)
    report.aggregates = _aggregate(report.records, per_seed_acc,
                                   per_seed_acc_before, config)
    return report


def _aggregate(records, per_seed_acc, per_seed_acc_before, config: RunConfig):
    aggregates = {
        "problems": len(records),
        "acc": None,
        "acc_per_seed": per_seed_acc,
        "acc_before_revision_per_seed": per_seed_acc_before or None,
        "multi_acc": None,
        "sol_mean": None,
        "llm_mean": None,
        "ftheta_mean": None,
        "revision_success": None,
    }
    if not records:
        return aggregates
    acc_values = [a for a in per_seed_acc if a is not None]
    aggregates["acc"] = float(statistics.median(acc_values)) if acc_values else None
    aggregates["llm_mean"] = float(np.mean([r["llm_calls"] for r in records]))
    aggregates["ftheta_mean"] = float(np.mean([r["ftheta_calls"] for r in records]))
    if config.mode == "multi":
        fractions = [np.mean(r["solved"]) if r["solved"] else 0.0 for r in records]
        aggregates["multi_acc"] = 100.0 * float(np.mean(fractions))
        aggregates["sol_mean"] = float(np.mean([r["solutions"] for r in records]))
    if config.revision_rounds > 0:
        failed = [r for r in records if r["solved_before_revision"] is False]
        if failed:
            detected = sum(1 for r in failed if r["detected"])
            aggregates["revision_success"] = 100.0 * detected / len(failed)
    return aggregates


_METRIC_ROWS = (
    ("acc", "Acc [%]"),
    ("multi_acc", "MultiAcc [%]"),
    ("sol_mean", "#Sol"),
    ("llm_mean", "LLM invoked"),
    ("ftheta_mean", "f_theta invoked"),
    ("revision_success", "Revision success [%]"),
)


def report_text(report: EvalReport) -> str:
    lines = [
        f"task: {report.task}   mode: {report.mode}   "
        f"seeds: {','.join(str(s) for s in report.config.get('seeds', ()))}",
        f"problems: {report.aggregates.get('problems', 0)}",
    ]
    width = max(len(label) for _, label in _METRIC_ROWS)
    for key, label in _METRIC_ROWS:
        value = report.aggregates.get(key)
        if value is None:
            continue
        line = f"{label:<{width}}  {value:8.2f}"
        if key == "acc" and report.aggregates.get("acc_per_seed"):
            per_seed = " / ".join(f"{v:.2f}" for v in report.aggregates["acc_per_seed"])
            line += f"   (per seed: {per_seed})"
        lines.append(line)
    return "\n".join(lines) + "\n"


def report_json(report: EvalReport) -> str:
    return json.dumps(asdict(report), indent=2, sort_keys=True)


def render_report(report: EvalReport, fmt: str = "text") -> str:
    if fmt == "text":
        return report_text(report)
    if fmt == "json":
        return report_json(report)
    raise ContractError(f"unknown report format {fmt!r}")


def report_from_json(text: str) -> EvalReport:
    data = json.loads(text)
    return EvalReport(task=data["task"], mode=data["mode"], config=data["config"],
                      records=data["records"], aggregates=data["aggregates"])
