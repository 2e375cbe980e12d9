"""Sliding 8-puzzle on a 3x3 board, blank-centric moves.

States are length-9 permutations of 0-8 in row-major order with 0 as the
blank. A move names the direction the blank travels, in the fixed global
order [Left, Right, Up, Down]. Exact distances to the goal come from a
breadth-first table over all 181,440 reachable states (see tables.py).
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError, IllegalMoveError, InvariantViolation, StateParseError, UnsolvableStateError

ACTION_SPACE = 4
HORIZON = 9
DIAMETER = 31

MOVES = ("Left", "Right", "Up", "Down")
GOAL = (0, 1, 2, 3, 4, 5, 6, 7, 8)

# Blank displacement per move: Left/Right change the column, Up/Down the row.
_DELTA = {"Left": (0, -1), "Right": (0, 1), "Up": (-1, 0), "Down": (1, 0)}


def validate_tiles(tiles) -> tuple:
    tiles = tuple(int(t) for t in tiles)
    if sorted(tiles) != list(range(9)):
        raise InvariantViolation(f"tiles must be a permutation of 0-8, got {tiles}")
    return tiles


def is_solvable(tiles) -> bool:
    """Even permutation parity of the non-blank tiles (3x3 with blank moves
    preserves it, and the goal has zero inversions)."""
    tiles = validate_tiles(tiles)
    seq = [t for t in tiles if t != 0]
    inversions = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return inversions % 2 == 0


def new_state(tiles) -> tuple:
    tiles = validate_tiles(tiles)
    if not is_solvable(tiles):
        raise UnsolvableStateError(f"unreachable from the goal: {tiles}")
    return tiles


def legal_actions(state) -> list:
    blank = state.index(0)
    row, col = divmod(blank, 3)
    out = []
    for idx, move in enumerate(MOVES):
        dr, dc = _DELTA[move]
        if 0 <= row + dr <= 2 and 0 <= col + dc <= 2:
            out.append(idx)
    return out


def action_mask(state) -> np.ndarray:
    mask = np.zeros(ACTION_SPACE, dtype=bool)
    mask[legal_actions(state)] = True
    return mask


def apply(state, action: int) -> tuple:
    if action not in legal_actions(state):
        raise IllegalMoveError(action)
    blank = state.index(0)
    row, col = divmod(blank, 3)
    dr, dc = _DELTA[MOVES[action]]
    target = (row + dr) * 3 + (col + dc)
    tiles = list(state)
    tiles[blank], tiles[target] = tiles[target], tiles[blank]
    return tuple(tiles)


def is_terminal(state, steps_taken: int, horizon: int = HORIZON) -> bool:
    if steps_taken > horizon:
        raise ContractError(f"steps_taken {steps_taken} exceeds horizon {horizon}")
    return state == GOAL or steps_taken == horizon


def goal_reached(state) -> bool:
    return state == GOAL


def reward(state, steps_taken: int, horizon: int = HORIZON) -> float:
    """Negative minimum move count from the final state; 0 when solved.

    Network targets use reward / DIAMETER so values stay in [-1, 0].
    """
    if not is_terminal(state, steps_taken, horizon):
        raise ContractError("reward is defined on terminal states only")
    return -float(goal_distance(state))


def encode_state(state):
    """81 features: one-hot of which tile sits in each cell."""
    feats = np.zeros(81, dtype=np.float64)
    for cell, tile in enumerate(state):
        feats[cell * 9 + tile] = 1.0
    return feats, action_mask(state)


def format_state_text(state) -> str:
    return "\n".join(" ".join(str(t) for t in state[r * 3:r * 3 + 3]) for r in range(3))


def parse_state_text(text: str) -> tuple:
    parts = text.split()
    if len(parts) != 9:
        raise StateParseError(f"expected 9 tiles, got {len(parts)}")
    tiles = []
    for k, p in enumerate(parts):
        if not p.isdigit() or not 0 <= int(p) <= 8:
            raise StateParseError(f"bad tile {p!r}", position=k)
        tiles.append(int(p))
    return new_state(tiles)


def action_label(state, action: int) -> str:
    return MOVES[action]


def parse_move(text: str) -> int:
    text = text.strip().strip(".,")
    for idx, move in enumerate(MOVES):
        if text.lower() == move.lower():
            return idx
    raise StateParseError(f"unknown move {text!r}")


def rank(tiles) -> int:
    """Lehmer code rank of the permutation, 0..362879."""
    r = 0
    for i in range(9):
        smaller = sum(1 for j in range(i + 1, 9) if tiles[j] < tiles[i])
        r += smaller * math.factorial(8 - i)
    return r


def goal_distance(state) -> int:
    from . import tables

    d = int(tables.puzzle8_distances()[rank(state)])
    if d == tables.UNREACHABLE:
        raise UnsolvableStateError(f"unreachable from the goal: {state}")
    return d
