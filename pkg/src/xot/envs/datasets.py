"""Problem-instance generation and JSONL instance files.

8-puzzle and cube instances come from seeded random scrambles filtered by the
exact distance tables, deduplicated, and capped by an attempt budget. Game of
24 boards are not generated here: they are ingested from a rank-ordered CSV
(see harness.ingest_game24); this module can write that CSV by enumerating
every four-number board over 1..13 and ranking by how many distinct solving
action sequences each has (an easiness proxy standing in for the source
site's human solve-time ranking).
"""

from __future__ import annotations

import itertools
import json
import logging

import numpy as np

from ..errors import ContractError, GenerationExhaustedError
from . import cube, game24, puzzle8

logger = logging.getLogger(__name__)

GAME24_VALUE_RANGE = range(1, 14)


def generate_instances(task_name: str, count: int, seed: int, max_attempts=None) -> list:
    """Distinct scrambled states for puzzle8/cube, deterministic per seed."""
    if count <= 0:
        raise ContractError("count must be positive")
    if task_name == "game24":
        raise ContractError("game24 instances are ingested from CSV, not generated")
    if task_name not in ("puzzle8", "cube"):
        raise ContractError(f"unknown task {task_name!r}")
    if max_attempts is None:
        max_attempts = max(200_000, 500 * count)

    rng = np.random.default_rng(seed)
    seen = set()
    out = []
    for _ in range(max_attempts):
        if len(out) == count:
            return out
        state = _scramble_puzzle8(rng) if task_name == "puzzle8" else _scramble_cube(rng)
        if state in seen:
            continue
        seen.add(state)
        out.append(state)
    raise GenerationExhaustedError(
        f"only {len(out)} of {count} distinct {task_name} instances after {max_attempts} attempts"
    )


def _scramble_puzzle8(rng):
    """Random walk from the goal, kept only when it lands 1-9 moves out."""
    while True:
        length = int(rng.integers(1, 2 * puzzle8.HORIZON + 1))
        state = puzzle8.GOAL
        for _ in range(length):
            legal = puzzle8.legal_actions(state)
            state = puzzle8.apply(state, legal[int(rng.integers(len(legal)))])
        if 1 <= puzzle8.goal_distance(state) <= puzzle8.HORIZON:
            return state


def _scramble_cube(rng):
    """Five moves from the full 27-move set (turns of all six faces plus
    whole-cube rotations), kept only when 1-4 solver moves from solved."""
    while True:
        state = cube.BASE_STATE
        for _ in range(5):
            state = cube.apply_move(state, cube.SCRAMBLE_MOVES[int(rng.integers(27))])
        if 1 <= cube.goal_distance(state) <= cube.HORIZON:
            return state


def write_instances(path: str, task_name: str, states, splits) -> None:
    from . import get_task

    task = get_task(task_name)
    with open(path, "w", encoding="utf-8") as fh:
        for idx, (state, split) in enumerate(zip(states, splits)):
            record = {
                "task": task_name,
                "id": f"{task_name}-{idx:04d}",
                "state": task.format_state_text(state),
                "split": split,
            }
            fh.write(json.dumps(record) + "\n")


def read_instances(path: str, split=None) -> list:
    from . import get_task

    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if split is not None and record.get("split") != split:
                continue
            task = get_task(record["task"])
            out.append((record["id"], task.parse_state_text(record["state"])))
    return out


def assign_splits(n: int, n_test: int, seed: int) -> list:
    """Seeded train/test labels with exactly n_test 'test' entries."""
    if not 0 <= n_test <= n:
        raise ContractError(f"cannot hold out {n_test} of {n}")
    rng = np.random.default_rng(seed)
    test_idx = set(rng.choice(n, size=n_test, replace=False).tolist())
    return ["test" if i in test_idx else "train" for i in range(n)]


def game24_boards_ranked():
    """All solvable four-number boards over 1..13, easiest first.

    Rank key: number of distinct solving action sequences, descending (more
    ways to reach 24 reads as easier), ties broken lexicographically.
    """
    ranked = []
    for combo in itertools.combinations_with_replacement(GAME24_VALUE_RANGE, 4):
        n = len(game24.enumerate_solution_sequences(combo))
        if n > 0:
            ranked.append((combo, n))
    ranked.sort(key=lambda item: (-item[1], item[0]))
    return ranked


def write_game24_csv(path: str) -> int:
    ranked = game24_boards_ranked()
    with open(path, "w", encoding="utf-8") as fh:
        for combo, _ in ranked:
            fh.write(",".join(str(v) for v in combo) + "\n")
    logger.info("wrote %d solvable boards to %s", len(ranked), path)
    return len(ranked)
