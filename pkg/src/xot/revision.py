"""Collaborative thought revision: a critic names the first bad step of a
trajectory, and the search replays everything from just before that step with
a larger simulation budget. Repeatable for a fixed number of rounds.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Optional

from .envs import game24, get_task
from .errors import ContractError, ProtocolError, TransportError
from .mcts import Evaluator, SearchConfig, act_sequence
from .thoughts import ThoughtSet, ThoughtStep, ThoughtTrajectory

logger = logging.getLogger(__name__)

VERDICTS = ("valid", "wrong_step", "all_wrong", "unparseable")


@dataclass(frozen=True)
class Critique:
    """A critic's verdict on one trajectory.

    "unparseable" marks a critic reply that named no verdict at all; the
    revision loop treats it like valid (conservative pass-through).
    """

    verdict: str
    wrong_step: Optional[int] = None  # 1-based, only for verdict="wrong_step"
    rationale: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ContractError(f"unknown verdict {self.verdict!r}")
        if self.verdict == "wrong_step":
            if self.wrong_step is None or self.wrong_step < 1:
                raise ContractError("wrong_step verdict needs a step index >= 1")
        elif self.wrong_step is not None:
            raise ContractError(f"verdict {self.verdict!r} cannot carry a step index")


@dataclass
class RevisionConfig:
    max_rounds: int = 1
    simulations: int = 0  # 0: the task's revision setting (500 / 50 / 500)
    exploration_weight: float = 1.0

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ContractError("max_rounds must be >= 1")
        if self.simulations < 0:
            raise ContractError("simulations must be >= 0")

    def simulations_for(self, task) -> int:
        return self.simulations or task.default_revision_simulations


def _check_consistent(task, problem, trajectory: ThoughtTrajectory):
    if trajectory.task_name != task.name:
        raise ContractError(
            f"trajectory is for {trajectory.task_name!r}, critic is for {task.name!r}")
    trajectory.validate()
    if problem is not None and trajectory.initial_state != problem:
        raise ContractError("trajectory does not start at the given problem")


def oracle_critic(task, problem, trajectory: ThoughtTrajectory) -> Critique:
    """Environment-grounded review, no LLM involved.

    Valid iff the trajectory ends at the goal. Otherwise the first step that
    throws the game away is named: for Game of 24 the first step after which
    24 is unreachable; for the move puzzles the first move that fails to
    reduce goal distance, or leaves more distance than moves remaining. An
    error at step 1 means no prefix is worth keeping (all_wrong).
    """
    _check_consistent(task, problem, trajectory)
    if task.goal_reached(trajectory.final_state):
        return Critique("valid", rationale="goal reached")

    wrong = None
    why = ""
    if task.name == "game24":
        if not game24.solvable_24(trajectory.initial_state.numbers)[0]:
            return Critique("all_wrong", rationale="the problem itself cannot reach 24")
        for i, step in enumerate(trajectory.steps, 1):
            before = game24.solvable_24(step.state_before.numbers)[0]
            after = game24.solvable_24(step.state_after.numbers)[0]
            if before and not after:
                wrong = i
                why = f"24 is unreachable from the numbers left after step {i}"
                break
    else:
        for i, step in enumerate(trajectory.steps, 1):
            d_before = task.goal_distance(step.state_before)
            d_after = task.goal_distance(step.state_after)
            if d_after >= d_before:
                wrong = i
                why = f"step {i} does not move closer to the goal"
                break
            if d_after > task.horizon - i:
                wrong = i
                why = (f"step {i} leaves distance {d_after} with only "
                       f"{task.horizon - i} moves remaining")
                break
    if wrong is None:
        # Every step kept the goal in reach, so the trajectory simply stopped
        # short; redoing the last move is the only sensible pointer.
        wrong = len(trajectory.steps)
        why = "no single step is fatal but the goal was not reached"
    if wrong <= 1:
        return Critique("all_wrong", rationale=why)
    return Critique("wrong_step", wrong_step=wrong, rationale=why)


class OracleCritic:
    """Critic backed by the task's own solvability/distance oracles."""

    def __init__(self, task):
        self.task = task

    def review(self, problem, trajectory: ThoughtTrajectory) -> Critique:
        return oracle_critic(self.task, problem, trajectory)


class AlwaysValidCritic:
    """Stub that approves everything; useful for call-count baselines."""

    def review(self, problem, trajectory: ThoughtTrajectory) -> Critique:
        return Critique("valid")


def revise_once(task, problem, trajectory: ThoughtTrajectory, critique: Critique,
                network, config: RevisionConfig,
                evaluator: Optional[Evaluator] = None) -> ThoughtTrajectory:
    """Keep steps before the flagged one, re-search the rest with L sims/move.

    A valid (or unparseable) critique returns the trajectory unchanged;
    all_wrong restarts the search from the initial state.
    """
    if critique.verdict in ("valid", "unparseable"):
        return trajectory
    if critique.verdict == "wrong_step":
        if critique.wrong_step > len(trajectory.steps):
            raise ContractError(
                f"wrong_step {critique.wrong_step} exceeds trajectory length "
                f"{len(trajectory.steps)}")
        keep = critique.wrong_step - 1
    else:
        keep = 0
    prefix = list(trajectory.steps[:keep])
    start = prefix[-1].state_after if prefix else trajectory.initial_state
    search = SearchConfig(simulations=config.simulations_for(task),
                          exploration_weight=config.exploration_weight)
    episode = act_sequence(task, start, network, search, select="argmax",
                           initial_steps=keep, evaluator=evaluator)
    steps = prefix + [ThoughtStep(r.state_before, r.action, r.state_after)
                      for r in episode.steps]
    return ThoughtTrajectory(task_name=task.name, steps=steps)


def _log(log_file, trajectory_index, round_no, verdict, wrong_step, simulations):
    if log_file is None:
        return
    log_file.write(json.dumps({
        "trajectory": trajectory_index,
        "round": round_no,
        "verdict": verdict,
        "wrong_step": wrong_step,
        "simulations": simulations,
    }) + "\n")
    log_file.flush()


def revise_loop(task, problem, thoughts: ThoughtSet, critic, network,
                config: RevisionConfig, log_file=None):
    """Review/revise each trajectory for up to max_rounds, stopping early when
    the critic approves. Returns (revised ThoughtSet, counters).

    One critic call per round per trajectory. A critic transport or protocol
    failure is logged and the trajectory passes through unrevised, as does an
    out-of-range step index from a confused critic.
    """
    if thoughts.task_name != task.name:
        raise ContractError(
            f"thought set is for {thoughts.task_name!r}, not {task.name!r}")
    counters = {"critic_calls": 0, "ftheta_calls": 0}
    revised = []
    for index, trajectory in enumerate(thoughts.trajectories):
        current = trajectory
        for round_no in range(1, config.max_rounds + 1):
            try:
                critique = critic.review(problem, current)
            except (TransportError, ProtocolError) as exc:
                counters["critic_calls"] += 1
                _log(log_file, index, round_no, "critic_failure", None, 0)
                logger.warning("critic failed on trajectory %d round %d: %s",
                               index, round_no, exc)
                break
            counters["critic_calls"] += 1
            if critique.verdict in ("valid", "unparseable"):
                _log(log_file, index, round_no, critique.verdict, None, 0)
                if critique.verdict == "unparseable":
                    logger.warning("critic reply on trajectory %d round %d was "
                                   "unparseable; leaving it as is", index, round_no)
                break
            if (critique.verdict == "wrong_step"
                    and critique.wrong_step > len(current.steps)):
                _log(log_file, index, round_no, "out_of_range",
                     critique.wrong_step, 0)
                logger.warning("critic named step %d of a %d-step trajectory; "
                               "leaving it as is", critique.wrong_step,
                               len(current.steps))
                break
            evaluator = Evaluator(network, cache=True)
            current = revise_once(task, problem, current, critique, network,
                                  config, evaluator=evaluator)
            counters["ftheta_calls"] += evaluator.requests
            _log(log_file, index, round_no, critique.verdict, critique.wrong_step,
                 config.simulations_for(task))
        revised.append(current)

    kept = []
    counts = []
    for original_index, trajectory in enumerate(revised):
        seqs = [t.actions for t in kept]
        count = (thoughts.counts[original_index]
                 if original_index < len(thoughts.counts) else 1)
        if trajectory.actions in seqs:
            # two trajectories revised into the same line: merge their tallies
            counts[seqs.index(trajectory.actions)] += count
        else:
            kept.append(trajectory)
            counts.append(count)
    new_set = ThoughtSet(task_name=thoughts.task_name, trajectories=kept,
                         counts=counts, samples=thoughts.samples,
                         distinct=thoughts.distinct,
                         ftheta_calls=thoughts.ftheta_calls + counters["ftheta_calls"])
    return new_set, counters
