"""Self-play training: MCTS plays episodes, visit distributions and final
rewards become (s, eps(s), v(s)) samples, and the network fits them between
iterations.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DivergenceError
from .mcts import Evaluator, SearchConfig, act_sequence
from .net import PolicyValueNet, TrainSample

logger = logging.getLogger(__name__)


@dataclass
class TrainPlan:
    iterations: int = 3
    episodes_per_iteration: int = 10
    simulations: int = 0  # 0: use the task's paper setting
    learning_rate: float = 0.05
    momentum: float = 0.0
    epochs: int = 200
    batch_size: int = 32
    buffer_capacity: int = 50_000
    seed: int = 0
    temperature: float = 1.0
    exploration_weight: float = 1.0
    per_step_values: bool = False
    problem_sampling: str = "uniform"
    dirichlet_alpha: float = 0.0  # >0 adds root noise during self-play
    dirichlet_fraction: float = 0.25

    def __post_init__(self):
        if self.iterations < 1 or self.episodes_per_iteration < 1:
            raise ContractError("iterations and episodes_per_iteration must be >= 1")
        if self.epochs < 1 or self.batch_size < 1 or self.buffer_capacity < 1:
            raise ContractError("epochs, batch_size and buffer_capacity must be >= 1")
        if self.problem_sampling not in ("uniform", "balanced"):
            raise ContractError(f"unknown problem_sampling {self.problem_sampling!r}")


# Tuned per-task settings for the unpublished hyperparameters. Iterations,
# episodes per iteration and simulation counts stay at the published values.
TASK_PLAN_OVERRIDES = {
    "game24": {},
    "puzzle8": {"exploration_weight": 0.15, "learning_rate": 0.1},
    "cube": {"exploration_weight": 0.25, "temperature": 0.5, "learning_rate": 0.1},
}


def plan_for(task_name: str, **overrides) -> TrainPlan:
    """The recommended TrainPlan for a task, with optional overrides on top."""
    if task_name not in TASK_PLAN_OVERRIDES:
        raise ContractError(f"no training plan for task {task_name!r}")
    settings = dict(TASK_PLAN_OVERRIDES[task_name])
    settings.update(overrides)
    return TrainPlan(**settings)


class ReplayBuffer:
    """FIFO sample store; evicts the oldest samples beyond capacity."""

    def __init__(self, capacity: int = 50_000):
        if capacity < 1:
            raise ContractError("capacity must be >= 1")
        self.capacity = capacity
        self._entries = []  # (TrainSample, episode_id, step_index)

    def extend(self, samples, episode_id: int):
        for step_index, sample in enumerate(samples):
            self._entries.append((sample, episode_id, step_index))
        overflow = len(self._entries) - self.capacity
        if overflow > 0:
            del self._entries[:overflow]

    def samples(self):
        return [entry[0] for entry in self._entries]

    def __len__(self):
        return len(self._entries)


def self_play_episode(task, problem, network, plan: TrainPlan, rng, evaluator=None):
    """One gamma-sampled rollout; returns its TrainSamples and the episode."""
    config = SearchConfig(
        simulations=plan.simulations or task.default_simulations,
        exploration_weight=plan.exploration_weight,
        temperature=plan.temperature,
        dirichlet_alpha=plan.dirichlet_alpha or None,
        dirichlet_fraction=plan.dirichlet_fraction,
    )
    episode = act_sequence(task, problem, network, config, select="sample",
                           rng=rng, evaluator=evaluator)
    if not episode.steps:
        return [], episode
    final_reward = task.normalized_reward(episode.final_state, episode.initial_steps + len(episode.steps))
    samples = []
    for step in episode.steps:
        if plan.per_step_values:
            if task.goal_distance is None:
                raise ContractError(f"{task.name} has no distance oracle for per-step values")
            value = -task.goal_distance(step.state_before) / task.diameter
        else:
            value = final_reward
        samples.append(TrainSample(
            features=step.features,
            mask=step.mask,
            target_policy=step.policy_target,
            target_value=float(value),
        ))
    return samples, episode


def train_iteration(network: PolicyValueNet, buffer: ReplayBuffer, plan: TrainPlan, rng):
    """Epochs of minibatch SGD over the buffer; returns per-epoch mean loss
    measured on the full buffer after each epoch."""
    if len(buffer) == 0:
        raise ContractError("replay buffer is empty")
    data = buffer.samples()
    curve = [network.loss(data)]
    for _ in range(plan.epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(data), plan.batch_size):
            batch = [data[i] for i in order[start:start + plan.batch_size]]
            network.train_step(batch, plan.learning_rate, plan.momentum)
        curve.append(network.loss(data))
    return curve


def _sample_problems(task, problems, plan: TrainPlan, rng):
    """Pick episode problems for one iteration.

    "uniform" (the default) draws without replacement. "balanced" first draws
    a scramble distance uniformly over the distances present, then a problem
    within that class; easy problems give early self-play a reachable goal,
    which can bootstrap the value signal on tasks with a distance oracle.
    """
    mode = plan.problem_sampling
    if mode == "uniform" or task.goal_distance is None:
        picks = rng.choice(len(problems), size=plan.episodes_per_iteration, replace=False)
        return [problems[int(i)] for i in picks]
    by_distance = {}
    for problem in problems:
        by_distance.setdefault(task.goal_distance(problem), []).append(problem)
    distances = sorted(by_distance)
    picked = []
    for _ in range(plan.episodes_per_iteration):
        group = by_distance[distances[int(rng.integers(len(distances)))]]
        picked.append(group[int(rng.integers(len(group)))])
    return picked


def run_training(task, problems, plan: TrainPlan, checkpoint_path=None, log_file=None):
    """The full loop: per iteration, self-play episodes_per_iteration problems,
    extend the buffer, train.

    On divergence the last good parameters are restored and training stops
    early. Returns (network, per-iteration metrics list).
    """
    if len(problems) < plan.episodes_per_iteration:
        raise ContractError(
            f"need at least {plan.episodes_per_iteration} training problems, got {len(problems)}"
        )
    rng = np.random.default_rng(plan.seed)
    network = PolicyValueNet(task.name, task.input_dim, task.action_space, init_seed=plan.seed)
    buffer = ReplayBuffer(plan.buffer_capacity)
    metrics = []
    episode_id = 0
    for iteration in range(1, plan.iterations + 1):
        snapshot = copy.deepcopy(network.params)
        picks = _sample_problems(task, problems, plan, rng)
        ftheta_calls = 0
        new_samples = 0
        for problem in picks:
            evaluator = Evaluator(network, cache=True)
            samples, episode = self_play_episode(task, problem, network, plan,
                                                 rng, evaluator=evaluator)
            buffer.extend(samples, episode_id)
            episode_id += 1
            ftheta_calls += episode.ftheta_calls
            new_samples += len(samples)
        try:
            curve = train_iteration(network, buffer, plan, rng)
        except DivergenceError as exc:
            network.params = snapshot
            logger.error("iteration %d diverged (%s); restored previous parameters", iteration, exc)
            break
        record = {
            "iteration": iteration,
            "episodes": plan.episodes_per_iteration,
            "samples": new_samples,
            "buffer": len(buffer),
            "mean_loss": curve[-1],
            "ftheta_calls": ftheta_calls,
        }
        metrics.append(record)
        if log_file is not None:
            log_file.write(json.dumps(record) + "\n")
            log_file.flush()
        logger.info("iteration %d: %d samples, loss %.4f, %d ftheta calls",
                    iteration, new_samples, curve[-1], ftheta_calls)
    if checkpoint_path is not None:
        network.save_checkpoint(checkpoint_path)
    return network, metrics
