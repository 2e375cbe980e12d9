"""Task environments and the uniform adapter the search stack works against.

Each task module exposes the same vocabulary (states, actions, encode,
format/parse, rewards); the Task record bundles those functions with the
per-task constants so MCTS, the trainer and the harness never branch on task
names.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..errors import ContractError
from . import cube, game24, puzzle8, tables

__all__ = ["Task", "TASKS", "get_task", "game24", "puzzle8", "cube", "tables"]


@dataclass(frozen=True)
class Task:
    """Uniform facade over one environment module.

    is_terminal/reward take (state, steps_taken) everywhere; Game of 24
    ignores the step count since its depth is fixed by construction.
    """

    name: str
    action_space: int
    horizon: int
    input_dim: int
    diameter: Optional[int]
    new_state: Callable
    parse_state_text: Callable
    format_state_text: Callable
    legal_actions: Callable
    action_mask: Callable
    apply: Callable
    is_terminal: Callable  # (state, steps_taken, horizon) -> bool
    goal_reached: Callable
    reward: Callable  # (state, steps_taken, horizon) -> float, raw scale
    normalized_reward: Callable  # reward mapped into [-1, 1] for the network
    encode_state: Callable
    action_label: Callable
    goal_distance: Optional[Callable] = None
    # Paper run settings: simulations per move (train/eval), the revision
    # budget L, and the multi-solution sample count M. The exploration weight
    # is unpublished, so each task carries its tuned value.
    default_simulations: int = 20
    default_revision_simulations: int = 50
    default_multi_samples: int = 50
    default_exploration_weight: float = 1.0


TASKS = {
    "game24": Task(
        name="game24",
        action_space=game24.ACTION_SPACE,
        horizon=game24.HORIZON,
        input_dim=12,
        diameter=None,
        new_state=game24.new_state,
        parse_state_text=game24.parse_state_text,
        format_state_text=game24.format_state_text,
        legal_actions=game24.legal_actions,
        action_mask=game24.action_mask,
        apply=game24.apply,
        is_terminal=lambda s, k, h=game24.HORIZON: game24.is_terminal(s, k, h),
        goal_reached=game24.goal_reached,
        reward=lambda s, k, h=game24.HORIZON: game24.reward(s),
        normalized_reward=lambda s, k, h=game24.HORIZON: game24.reward(s),
        encode_state=game24.encode_state,
        action_label=game24.action_label,
        goal_distance=None,
        default_simulations=200,
        default_revision_simulations=500,
        default_multi_samples=500,
        default_exploration_weight=1.0,
    ),
    "puzzle8": Task(
        name="puzzle8",
        action_space=puzzle8.ACTION_SPACE,
        horizon=puzzle8.HORIZON,
        input_dim=81,
        diameter=puzzle8.DIAMETER,
        new_state=puzzle8.new_state,
        parse_state_text=puzzle8.parse_state_text,
        format_state_text=puzzle8.format_state_text,
        legal_actions=puzzle8.legal_actions,
        action_mask=puzzle8.action_mask,
        apply=puzzle8.apply,
        is_terminal=puzzle8.is_terminal,
        goal_reached=puzzle8.goal_reached,
        reward=puzzle8.reward,
        normalized_reward=lambda s, k, h=puzzle8.HORIZON: puzzle8.reward(s, k, h) / puzzle8.DIAMETER,
        encode_state=puzzle8.encode_state,
        action_label=puzzle8.action_label,
        goal_distance=puzzle8.goal_distance,
        default_simulations=20,
        default_revision_simulations=50,
        default_multi_samples=50,
        default_exploration_weight=0.07,
    ),
    "cube": Task(
        name="cube",
        action_space=cube.ACTION_SPACE,
        horizon=cube.HORIZON,
        input_dim=144,
        diameter=cube.DIAMETER,
        new_state=cube.new_state,
        parse_state_text=cube.parse_state_text,
        format_state_text=cube.format_state_text,
        legal_actions=cube.legal_actions,
        action_mask=cube.action_mask,
        apply=cube.apply,
        is_terminal=cube.is_terminal,
        goal_reached=cube.goal_reached,
        reward=cube.reward,
        normalized_reward=lambda s, k, h=cube.HORIZON: cube.reward(s, k, h) / cube.DIAMETER,
        encode_state=cube.encode_state,
        action_label=cube.action_label,
        goal_distance=cube.goal_distance,
        default_simulations=20,
        default_revision_simulations=500,
        default_multi_samples=50,
        default_exploration_weight=0.35,
    ),
}


def get_task(name: str) -> Task:
    try:
        return TASKS[name]
    except KeyError:
        raise ContractError(f"unknown task {name!r}; choose from {sorted(TASKS)}") from None
