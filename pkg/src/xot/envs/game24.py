"""Game of 24 as a three-step MDP over exact rationals.

A state holds 1-4 numbers (insertion order: new results are appended at the
end) together with the expression tree behind each number and the list of
equations formed so far. Actions are indexed into a fixed 36-entry
enumeration: 6 unordered slot pairs over the ascending-sorted numbers times
6 operation variants. All arithmetic uses fractions.Fraction, so equality
with 24 is exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ..errors import ContractError, IllegalMoveError, InvariantViolation, StateParseError

ACTION_SPACE = 36
HORIZON = 3
TARGET = Fraction(24)

# Slot pairs are over the ascending-sorted view of the numbers; ops are the
# six variants of picking (a, b) with a <= b by sorted position.
SLOT_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
OPS = ("add", "sub_ab", "sub_ba", "mul", "div_ab", "div_ba")
OP_SYMBOL = {"add": "+", "sub_ab": "-", "sub_ba": "-", "mul": "*", "div_ab": "/", "div_ba": "/"}
COMMUTATIVE = {"+", "*"}


def num_str(value: Fraction) -> str:
    """Render a rational the way the step lines do: integers bare, else n/d."""
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


@dataclass(frozen=True)
class Expr:
    """Expression tree node for one number on the table.

    Atoms carry their position in the original input (``orig_pos``); compound
    nodes remember the step that created them and their operand order as
    printed in the equation line.
    """

    value: Fraction
    op: Optional[str] = None  # symbol "+", "-", "*", "/" for compounds
    first: Optional["Expr"] = None
    second: Optional["Expr"] = None
    step: int = 0
    orig_pos: int = -1

    @property
    def is_atom(self) -> bool:
        return self.op is None

    def render_inline(self) -> str:
        """Step-line expression: every operand is wrapped in parentheses."""
        if self.is_atom:
            return num_str(self.value)
        return f"({self.first.render_inline()}) {self.op} ({self.second.render_inline()})"

    def render_answer(self) -> str:
        """Answer-line expression: compound operands get one paren layer and
        commutative operands are ordered by creation (atoms by later input
        position first)."""
        if self.is_atom:
            return num_str(self.value)
        a, b = self.first, self.second
        if self.op in ("+", "*"):
            a, b = sorted((a, b), key=_answer_order_key)
        return f"{_answer_wrap(a)} {self.op} {_answer_wrap(b)}"


def _answer_order_key(e: Expr):
    # Atoms (step 0) come first, later input positions leading; compounds
    # follow in creation order.
    return (e.step, -e.orig_pos if e.is_atom else 0)


def _answer_wrap(e: Expr) -> str:
    return e.render_answer() if e.is_atom else f"({e.render_answer()})"


@dataclass(frozen=True)
class Game24State:
    """Numbers in insertion order, their expressions, and the equations so far."""

    numbers: tuple
    exprs: tuple
    history: tuple

    def __post_init__(self):
        if not 1 <= len(self.numbers) <= 4:
            raise InvariantViolation(f"need 1-4 numbers, got {len(self.numbers)}")
        if len(self.history) + len(self.numbers) != 4:
            raise InvariantViolation("|history| + |numbers| must equal 4")
        for v in self.numbers:
            if not isinstance(v, Fraction):
                raise InvariantViolation(f"number {v!r} is not an exact rational")

    def __hash__(self):
        return hash((self.numbers, self.history))

    def __eq__(self, other):
        if not isinstance(other, Game24State):
            return NotImplemented
        return self.numbers == other.numbers and self.history == other.history


def new_state(values: Sequence) -> Game24State:
    values = tuple(Fraction(v) for v in values)
    exprs = tuple(Expr(value=v, orig_pos=i) for i, v in enumerate(values))
    return Game24State(numbers=values, exprs=exprs, history=())


def _sorted_positions(state: Game24State):
    """Positions of the numbers in ascending value order (stable on ties)."""
    return sorted(range(len(state.numbers)), key=lambda i: (state.numbers[i], i))


def _op_result(op: str, a: Fraction, b: Fraction) -> Optional[Fraction]:
    if op == "add":
        return a + b
    if op == "sub_ab":
        return a - b
    if op == "sub_ba":
        return b - a
    if op == "mul":
        return a * b
    if op == "div_ab":
        return a / b if b != 0 else None
    if op == "div_ba":
        return b / a if a != 0 else None
    raise ValueError(op)


def legal_actions(state: Game24State) -> list:
    """Legal indices into the 36-entry enumeration.

    Division by zero is masked; when the two picked values are equal, the
    b-a / b/a variants duplicate a-b / a/b and are masked; a slot pair whose
    value pair repeats an earlier pair is masked entirely.
    """
    n = len(state.numbers)
    if n < 2:
        return []
    order = _sorted_positions(state)
    out = []
    seen_pairs = set()
    for pair_idx, (i, j) in enumerate(SLOT_PAIRS):
        if j >= n:
            continue
        a = state.numbers[order[i]]
        b = state.numbers[order[j]]
        if (a, b) in seen_pairs:
            continue
        seen_pairs.add((a, b))
        for op_idx, op in enumerate(OPS):
            if a == b and op in ("sub_ba", "div_ba"):
                continue
            if op == "div_ab" and b == 0:
                continue
            if op == "div_ba" and a == 0:
                continue
            out.append(pair_idx * 6 + op_idx)
    return out


def action_mask(state: Game24State) -> np.ndarray:
    mask = np.zeros(ACTION_SPACE, dtype=bool)
    mask[legal_actions(state)] = True
    return mask


def _equation_order(x: Expr, x_pos: int, y: Expr, y_pos: int, op: str):
    """Operand order for the printed equation.

    Non-commutative ops print in computation order. Commutative ops list
    atoms before compounds; two atoms go later-list-position first, two
    compounds later-created first (the ordering used by the worked examples).
    """
    if op not in COMMUTATIVE:
        return (x, y)

    def key(item):
        e, pos = item
        return (0, -pos) if e.is_atom else (1, -e.step)

    ordered = sorted([(x, x_pos), (y, y_pos)], key=key)
    return (ordered[0][0], ordered[1][0])


def apply(state: Game24State, action: int) -> Game24State:
    if action not in legal_actions(state):
        raise IllegalMoveError(action)
    pair_idx, op_idx = divmod(action, 6)
    i, j = SLOT_PAIRS[pair_idx]
    op = OPS[op_idx]
    order = _sorted_positions(state)
    pos_a, pos_b = order[i], order[j]
    a, b = state.numbers[pos_a], state.numbers[pos_b]
    result = _op_result(op, a, b)
    assert result is not None  # masked above

    # Computation orientation: which operand is printed first for - and /.
    if op in ("sub_ba", "div_ba"):
        comp = ((state.exprs[pos_b], pos_b), (state.exprs[pos_a], pos_a))
    else:
        comp = ((state.exprs[pos_a], pos_a), (state.exprs[pos_b], pos_b))
    (x, x_pos), (y, y_pos) = comp
    first, second = _equation_order(x, x_pos, y, y_pos, OP_SYMBOL[op])

    step = len(state.history) + 1
    new_expr = Expr(value=result, op=OP_SYMBOL[op], first=first, second=second, step=step)
    equation = f"{num_str(first.value)} {OP_SYMBOL[op]} {num_str(second.value)} = {num_str(result)}"

    keep = [k for k in range(len(state.numbers)) if k not in (pos_a, pos_b)]
    numbers = tuple(state.numbers[k] for k in keep) + (result,)
    exprs = tuple(state.exprs[k] for k in keep) + (new_expr,)
    return Game24State(numbers=numbers, exprs=exprs, history=state.history + (equation,))


def is_terminal(state: Game24State, steps_taken: int = 0, horizon: int = HORIZON) -> bool:
    if steps_taken > horizon:
        raise ContractError(f"steps_taken {steps_taken} exceeds horizon {horizon}")
    return len(state.numbers) == 1


def goal_reached(state: Game24State) -> bool:
    return len(state.numbers) == 1 and state.numbers[0] == TARGET


def reward(state: Game24State) -> float:
    if not is_terminal(state):
        raise ContractError("reward is defined on terminal states only")
    return 1.0 if goal_reached(state) else -1.0


def encode_state(state: Game24State):
    """12 features: 4 ascending slots of (value/24, present) plus a count one-hot."""
    values = sorted(state.numbers)
    feats = np.zeros(12, dtype=np.float64)
    for slot, v in enumerate(values):
        feats[2 * slot] = float(v) / 24.0
        feats[2 * slot + 1] = 1.0
    feats[8 + len(values) - 1] = 1.0
    return feats, action_mask(state)


def format_state_text(state: Game24State) -> str:
    return " ".join(num_str(v) for v in state.numbers)


def parse_state_text(text: str) -> Game24State:
    parts = text.split()
    if not 1 <= len(parts) <= 4:
        raise StateParseError(f"expected 1-4 numbers, got {len(parts)}")
    values = []
    for k, p in enumerate(parts):
        try:
            values.append(Fraction(p))
        except (ValueError, ZeroDivisionError):
            raise StateParseError(f"bad number {p!r}", position=k)
    return new_state(values)


def action_label(state: Game24State, action: int) -> str:
    """The equation text this action would print, e.g. '12 * 2 = 24'."""
    return apply(state, action).history[-1]


def solvable_24(numbers: Sequence):
    """Exhaustive check whether the multiset can reach exactly 24.

    Returns (solvable, witness) where witness is a parenthesized expression
    text evaluating to 24, or None.
    """
    values = [Fraction(v) for v in numbers]
    if not 1 <= len(values) <= 4:
        raise ContractError("solvable_24 takes 1-4 numbers")
    texts = [num_str(v) for v in values]

    def search(vals, txts):
        if len(vals) == 1:
            return txts[0] if vals[0] == TARGET else None
        tried = set()
        for i, j in itertools.combinations(range(len(vals)), 2):
            a, b = vals[i], vals[j]
            key = (a, b) if a <= b else (b, a)
            if key in tried:
                continue
            tried.add(key)
            rest_v = [vals[k] for k in range(len(vals)) if k not in (i, j)]
            rest_t = [txts[k] for k in range(len(vals)) if k not in (i, j)]
            candidates = [
                (a + b, f"({txts[i]} + {txts[j]})"),
                (a * b, f"({txts[i]} * {txts[j]})"),
                (a - b, f"({txts[i]} - {txts[j]})"),
                (b - a, f"({txts[j]} - {txts[i]})"),
            ]
            if b != 0:
                candidates.append((a / b, f"({txts[i]} / {txts[j]})"))
            if a != 0:
                candidates.append((b / a, f"({txts[j]} / {txts[i]})"))
            seen_results = set()
            for val, txt in candidates:
                if val in seen_results:
                    continue
                seen_results.add(val)
                hit = search(rest_v + [val], rest_t + [txt])
                if hit is not None:
                    return hit
        return None

    witness = search(values, texts)
    return witness is not None, witness


def enumerate_solution_sequences(values: Sequence, limit: Optional[int] = None) -> list:
    """All distinct action-index sequences that end at exactly 24.

    This is the census used to pick multi-solution test instances; the dedup
    key matches the one thought extraction uses.
    """
    root = new_state(values)
    found = []

    def walk(state, prefix):
        if limit is not None and len(found) >= limit:
            return
        if is_terminal(state):
            if goal_reached(state):
                found.append(tuple(prefix))
            return
        for a in legal_actions(state):
            walk(apply(state, a), prefix + [a])

    walk(root, [])
    return found
