"""A small estimator-style facade over training and solving.

XotSolver bundles the task, the network and the search settings behind
fit/solve/score so notebook use does not need the lower-level modules.
The get_params/set_params pair follows the scikit-learn convention so
the solver drops into loops written for that interface; there is no
sklearn dependency.
"""

from __future__ import annotations

from . import revision, thoughts
from .envs import get_task
from .errors import CheckpointError, ContractError
from .mcts import Evaluator, SearchConfig, act_sequence
from .net import PolicyValueNet
from .trainer import plan_for, run_training


class XotSolver:
    """Train on problem states, then extract thought trajectories.

    Parameters mirror the per-task run settings; 0 (or 0.0) means "use the
    task default". `revision_rounds` > 0 repairs failed trajectories with the
    oracle critic before returning them.
    """

    _PARAM_NAMES = ("task", "simulations", "exploration_weight",
                    "revision_rounds", "revision_simulations", "seed")

    def __init__(self, task="game24", simulations=0, exploration_weight=0.0,
                 revision_rounds=0, revision_simulations=0, seed=0):
        self.task = task
        self.simulations = simulations
        self.exploration_weight = exploration_weight
        self.revision_rounds = revision_rounds
        self.revision_simulations = revision_simulations
        self.seed = seed
        self.network_ = None
        self.train_metrics_ = None

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._PARAM_NAMES}

    def set_params(self, **params):
        for name, value in params.items():
            if name not in self._PARAM_NAMES:
                raise ContractError(f"unknown parameter {name!r} for XotSolver")
            setattr(self, name, value)
        return self

    def _task(self):
        return get_task(self.task)

    def _search_config(self):
        task = self._task()
        return SearchConfig(
            simulations=self.simulations or task.default_simulations,
            exploration_weight=(self.exploration_weight
                                or task.default_exploration_weight))

    def _require_network(self):
        if self.network_ is None:
            raise CheckpointError("no network: call fit() or load() first")
        return self.network_

    def fit(self, problems, **plan_overrides):
        """Self-play training on the given problem states."""
        task = self._task()
        plan = plan_for(self.task, seed=self.seed, **plan_overrides)
        self.network_, self.train_metrics_ = run_training(task, list(problems), plan)
        return self

    def load(self, checkpoint_path: str):
        self.network_ = PolicyValueNet.load_checkpoint(checkpoint_path,
                                                       expect_task=self.task)
        return self

    def save(self, checkpoint_path: str):
        self._require_network().save_checkpoint(checkpoint_path)
        return self

    def solve(self, problem):
        """One problem -> ThoughtTrajectory (revised when configured)."""
        task = self._task()
        network = self._require_network()
        episode = act_sequence(task, problem, network, self._search_config(),
                               select="argmax",
                               evaluator=Evaluator(network, cache=True))
        trajectory = thoughts.extract_single(task, episode)
        if self.revision_rounds and not trajectory.solved():
            config = revision.RevisionConfig(
                max_rounds=self.revision_rounds,
                simulations=(self.revision_simulations
                             or task.default_revision_simulations),
                exploration_weight=(self.exploration_weight
                                    or task.default_exploration_weight))
            thought_set = thoughts.ThoughtSet(task.name, [trajectory], counts=[1])
            revised, _ = revision.revise_loop(task, problem, thought_set,
                                              revision.OracleCritic(task),
                                              network, config)
            trajectory = revised.trajectories[0]
        return trajectory

    def predict(self, problems):
        return [self.solve(problem) for problem in problems]

    def score(self, problems) -> float:
        """Fraction of problems whose extracted trajectory reaches the goal."""
        problems = list(problems)
        if not problems:
            raise ContractError("score() needs at least one problem")
        solved = sum(1 for t in self.predict(problems) if t.solved())
        return solved / len(problems)

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"XotSolver({params})"
