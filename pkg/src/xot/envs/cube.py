"""2x2 pocket cube over 24 sticker facelets.

Sticker layout: faces in order Upper, Front, Down, Left, Right, Back occupy
indices 0-3, 4-7, 8-11, 12-15, 16-19, 20-23; each face prints as two rows
"0 1" / "2 3" reading the face with Upper above Front, Front upright, and the
other faces as seen when the cube is rotated to bring them to Front (Down as
seen by tilting the cube forward twice).

Moves are facelet permutations applied as new[i] = state[perm[i]]. The
solver turns only U, R and F (quarter and half turns, 9 actions), which fixes
the Down-Left-Back corner; scrambles additionally use D, L, B and the whole
cube rotations x, y, z. A solved cube is any state whose six faces are each
a single color.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, IllegalMoveError, InvariantViolation, StateParseError, UnsolvableStateError

ACTION_SPACE = 9
HORIZON = 4
DIAMETER = 11
ORBIT_SIZE = 3674160

FACE_NAMES = ("Upper", "Front", "Down", "Left", "Right", "Back")
BASE_STATE = tuple(face for face in range(6) for _ in range(4))

# Color pairs on opposite faces of the solved cube: U-D, F-B, L-R.
OPPOSITE_COLOR = {0: 2, 2: 0, 1: 5, 5: 1, 3: 4, 4: 3}


def _chain(*perms):
    """Permutation equal to applying the given ones left to right."""
    out = list(range(24))
    for p in perms:
        out = [out[p[i]] for i in range(24)]
    return tuple(out)


def _inverse(perm):
    inv = [0] * 24
    for i, j in enumerate(perm):
        inv[j] = i
    return tuple(inv)


def _build_u():
    p = list(range(24))
    p[0], p[1], p[2], p[3] = 2, 0, 3, 1            # U face clockwise
    p[4], p[5] = 16, 17                            # F top row <- R top row
    p[12], p[13] = 4, 5                            # L top row <- F top row
    p[20], p[21] = 12, 13                          # B top row <- L top row
    p[16], p[17] = 20, 21                          # R top row <- B top row
    return tuple(p)


def _build_r():
    p = list(range(24))
    p[1], p[3] = 5, 7                              # U right col <- F right col
    p[20], p[22] = 3, 1                            # B left col <- U right col, reversed
    p[11], p[9] = 20, 22                           # D right col <- B left col, reversed
    p[7], p[5] = 11, 9                             # F right col <- D right col
    p[16], p[17], p[18], p[19] = 18, 16, 19, 17    # R face clockwise
    return tuple(p)


def _build_f():
    p = list(range(24))
    p[16], p[18] = 2, 3                            # R left col <- U bottom row
    p[9], p[8] = 16, 18                            # D top row <- R left col
    p[15], p[13] = 9, 8                            # L right col <- D top row
    p[2], p[3] = 15, 13                            # U bottom row <- L right col
    p[4], p[5], p[6], p[7] = 6, 4, 7, 5            # F face clockwise
    return tuple(p)


def _build_y():
    p = list(range(24))
    p[0], p[1], p[2], p[3] = 2, 0, 3, 1            # U clockwise
    p[8], p[9], p[10], p[11] = 9, 11, 8, 10        # D counter-clockwise
    for k in range(4):
        p[4 + k] = 16 + k                          # F <- R
        p[12 + k] = 4 + k                          # L <- F
        p[20 + k] = 12 + k                         # B <- L
        p[16 + k] = 20 + k                         # R <- B
    return tuple(p)


def _build_x():
    p = list(range(24))
    for k in range(4):
        p[0 + k] = 4 + k                           # U <- F
        p[4 + k] = 8 + k                           # F <- D
        p[8 + k] = 20 + (3 - k)                    # D <- B, reversed
        p[20 + k] = 3 - k                          # B <- U, reversed
    p[16], p[17], p[18], p[19] = 18, 16, 19, 17    # R clockwise
    p[12], p[13], p[14], p[15] = 13, 15, 12, 14    # L counter-clockwise
    return tuple(p)


def _build_all_moves():
    u, r, f = _build_u(), _build_r(), _build_f()
    x, y = _build_x(), _build_y()
    z = _chain(_inverse(y), x, y)
    d = _chain(x, x, u, x, x)
    l = _chain(y, y, r, y, y)
    b = _chain(y, y, f, y, y)
    base = {"U": u, "D": d, "F": f, "B": b, "L": l, "R": r, "x": x, "y": y, "z": z}
    moves = {}
    for name, p in base.items():
        moves[name] = p
        moves[name + "'"] = _inverse(p)
        moves[name + "2"] = _chain(p, p)
    return moves

MOVE_PERMS = _build_all_moves()
SCRAMBLE_MOVES = tuple(sorted(MOVE_PERMS))
SOLVER_MOVES = ("U", "U'", "U2", "R", "R'", "R2", "F", "F'", "F2")

# Facelets every solver move fixes: the Down-Left-Back corner.
FIXED_FACELETS = tuple(
    i for i in range(24)
    if all(MOVE_PERMS[m][i] == i for m in SOLVER_MOVES)
)


def validate_stickers(stickers) -> tuple:
    stickers = tuple(int(c) for c in stickers)
    if len(stickers) != 24:
        raise InvariantViolation(f"need 24 stickers, got {len(stickers)}")
    for c in stickers:
        if not 0 <= c <= 5:
            raise InvariantViolation(f"sticker color {c} outside 0-5")
    counts = [stickers.count(c) for c in range(6)]
    if counts != [4] * 6:
        raise InvariantViolation(f"each color must appear 4 times, got counts {counts}")
    return stickers


def new_state(stickers) -> tuple:
    return validate_stickers(stickers)


def apply_move(state, move: str) -> tuple:
    perm = MOVE_PERMS.get(move)
    if perm is None:
        raise IllegalMoveError(move, f"unknown move {move!r}")
    return tuple(state[perm[i]] for i in range(24))


def legal_actions(state) -> list:
    return list(range(ACTION_SPACE))


def action_mask(state) -> np.ndarray:
    return np.ones(ACTION_SPACE, dtype=bool)


def apply(state, action: int) -> tuple:
    if not 0 <= action < ACTION_SPACE:
        raise IllegalMoveError(action)
    return apply_move(state, SOLVER_MOVES[action])


def is_terminal(state, steps_taken: int, horizon: int = HORIZON) -> bool:
    if steps_taken > horizon:
        raise ContractError(f"steps_taken {steps_taken} exceeds horizon {horizon}")
    return goal_reached(state) or steps_taken == horizon


def goal_reached(state) -> bool:
    return all(
        state[4 * f] == state[4 * f + 1] == state[4 * f + 2] == state[4 * f + 3]
        for f in range(6)
    )


def reward(state, steps_taken: int, horizon: int = HORIZON) -> float:
    """Negative minimum move count from the final state; 0 when solved.

    Network targets use reward / DIAMETER so values stay in [-1, 0].
    """
    if not is_terminal(state, steps_taken, horizon):
        raise ContractError("reward is defined on terminal states only")
    return -float(goal_distance(state))


def encode_state(state):
    """144 features: one-hot of the color on each facelet.

    Colors are relabeled to the fixed-corner frame first, so the 24 colorings
    of one underlying position all encode identically and network experience
    transfers across them.
    """
    feats = np.zeros(144, dtype=np.float64)
    for pos, color in enumerate(normalize_colors(state)):
        feats[pos * 6 + color] = 1.0
    return feats, action_mask(state)


def format_state_text(state) -> str:
    lines = []
    for f, name in enumerate(FACE_NAMES):
        lines.append(f"{name}:")
        lines.append(f"{state[4 * f]} {state[4 * f + 1]}")
        lines.append(f"{state[4 * f + 2]} {state[4 * f + 3]}")
    return "\n".join(lines)


def parse_state_text(text: str) -> tuple:
    tokens = text.split()
    expected = []
    for name in FACE_NAMES:
        expected.append(f"{name}:")
        expected.extend([None] * 4)
    if len(tokens) != len(expected):
        raise StateParseError(f"expected {len(expected)} tokens, got {len(tokens)}")
    stickers = []
    for k, (tok, want) in enumerate(zip(tokens, expected)):
        if want is not None:
            if tok != want:
                raise StateParseError(f"expected {want!r}, got {tok!r}", position=k)
            continue
        if not tok.isdigit() or not 0 <= int(tok) <= 5:
            raise StateParseError(f"bad sticker {tok!r}", position=k)
        stickers.append(int(tok))
    return new_state(stickers)


def action_label(state, action: int) -> str:
    return SOLVER_MOVES[action]


def parse_move(text: str) -> int:
    text = text.strip().strip(".,")
    try:
        return SOLVER_MOVES.index(text)
    except ValueError:
        raise StateParseError(f"unknown move {text!r}") from None


def normalize_colors(state) -> tuple:
    """Relabel colors so the fixed Down-Left-Back corner shows the base
    colors (2, 3, 5); opposite faces keep opposite colors.

    Solver moves never touch that corner, so distances from the table built
    on the base coloring transfer unchanged. Raises UnsolvableStateError when
    the corner colors cannot come from any recoloring of a real cube.
    """
    d_i, l_i, b_i = FIXED_FACELETS
    mapping = {}
    for src, dst in ((state[d_i], 2), (state[l_i], 3), (state[b_i], 5)):
        mapping[src] = dst
        mapping[OPPOSITE_COLOR[src]] = OPPOSITE_COLOR[dst]
    if len(mapping) != 6:
        raise UnsolvableStateError(f"conflicting colors at the fixed corner of {state}")
    return tuple(mapping[c] for c in state)


def state_key(state) -> int:
    """Base-6 integer key for table lookups."""
    key = 0
    for c in reversed(state):
        key = key * 6 + c
    return key


def goal_distance(state) -> int:
    from . import tables

    normalized = normalize_colors(state)
    keys, dists = tables.cube_distances()
    key = state_key(normalized)
    idx = int(np.searchsorted(keys, key))
    if idx >= len(keys) or keys[idx] != key:
        raise UnsolvableStateError(f"state is not reachable on a real cube: {state}")
    return int(dists[idx])
