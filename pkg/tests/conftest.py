import os

import pytest

from xot import harness, trainer
from xot.envs import get_task

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GAME24_CSV = os.path.join(REPO_ROOT, "data", "game24.csv")
GOLDEN_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "golden")


def read_golden(name: str) -> str:
    with open(os.path.join(GOLDEN_DIR, name), encoding="utf-8") as fh:
        return fh.read()


def canonical_config(task_name: str, **overrides) -> harness.RunConfig:
    settings = dict(task=task_name, seeds=(0,))
    if task_name == "game24":
        settings["dataset_path"] = GAME24_CSV
    settings.update(overrides)
    return harness.RunConfig(**settings)


def train_seed(task_name: str, seed: int, checkpoint_path: str):
    """Train one network on the canonical split; returns (network, metrics)."""
    task = get_task(task_name)
    split = harness.load_problems(canonical_config(task_name), seed)
    problems = [state for _, state in split["train"]]
    plan = trainer.plan_for(task_name, seed=seed)
    return trainer.run_training(task, problems, plan,
                                checkpoint_path=checkpoint_path)


class TrainedStore:
    """Lazy per-(task, seed) trained networks, shared across the session."""

    def __init__(self, root: str):
        self.root = root
        self._cache = {}

    def checkpoint_path(self, task_name: str, seed) -> str:
        return os.path.join(self.root, f"ckpt-{task_name}-{seed}.json")

    def get(self, task_name: str, seed: int):
        key = (task_name, seed)
        if key not in self._cache:
            path = self.checkpoint_path(task_name, seed)
            network, metrics = train_seed(task_name, seed, path)
            self._cache[key] = {"network": network, "metrics": metrics,
                                "path": path}
        return self._cache[key]


@pytest.fixture(scope="session")
def trained(tmp_path_factory) -> TrainedStore:
    return TrainedStore(str(tmp_path_factory.mktemp("checkpoints")))


@pytest.fixture(scope="session")
def game24_trained(trained):
    return trained.get("game24", 0)


@pytest.fixture(scope="session")
def puzzle8_trained(trained):
    return trained.get("puzzle8", 0)


@pytest.fixture(scope="session")
def cube_trained(trained):
    return trained.get("cube", 0)
