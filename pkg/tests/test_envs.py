import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xot.envs import cube, datasets, game24, get_task, puzzle8, tables
from xot.errors import (ContractError, GenerationExhaustedError,
                        IllegalMoveError, InvariantViolation, StateParseError,
                        UnsolvableStateError)

from conftest import GAME24_CSV


def walk(task, state, rng, steps):
    for _ in range(steps):
        state = task.apply(state, int(rng.choice(task.legal_actions(state))))
    return state


def puzzle8_states(max_walk=40):
    return st.integers(0, 2 ** 31 - 1).map(
        lambda s: walk(get_task("puzzle8"), puzzle8.GOAL,
                       np.random.default_rng(s), max_walk))


def cube_states(max_walk=14):
    return st.integers(0, 2 ** 31 - 1).map(
        lambda s: walk(get_task("cube"), cube.BASE_STATE,
                       np.random.default_rng(s), max_walk))


def game24_boards():
    return st.lists(st.integers(1, 13), min_size=4, max_size=4)


def mid_game(values):
    """Craft a partially played Game of 24 state with placeholder history."""
    values = tuple(Fraction(v) for v in values)
    return game24.Game24State(
        numbers=values,
        exprs=tuple(game24.Expr(value=v, orig_pos=i)
                    for i, v in enumerate(values)),
        history=("_",) * (4 - len(values)))


# ---------------------------------------------------------------- Game of 24

class TestGame24:
    def test_equal_values_dedup(self):
        state = mid_game([1, 1])
        ops = {game24.OPS[a % 6] for a in game24.legal_actions(state)}
        assert ops == {"add", "sub_ab", "mul", "div_ab"}

    def test_repeated_value_pairs_masked(self):
        # {2, 2, 3}: sorted pairs (2,2), (2,3), (2,3) -> the second (2,3)
        # slot pair duplicates the first and is dropped entirely.
        state = mid_game([2, 2, 3])
        pairs = {a // 6 for a in game24.legal_actions(state)}
        assert pairs == {0, 1}

    def test_apply_paper_example(self):
        state = game24.new_state([2, 9, 10, 12])
        action = next(a for a in game24.legal_actions(state)
                      if game24.action_label(state, a) == "12 * 2 = 24")
        after = game24.apply(state, action)
        assert sorted(after.numbers) == [9, 10, 24]
        assert after.history == ("12 * 2 = 24",)

    def test_illegal_action_raises(self):
        with pytest.raises(IllegalMoveError):
            game24.apply(mid_game([24]), 0)

    def test_division_by_zero_masked(self):
        state = mid_game([0, 5])
        labels = [game24.action_label(state, a)
                  for a in game24.legal_actions(state)]
        assert not any("/ 0" in text.split("=")[0] for text in labels)

    def test_terminal_and_reward(self):
        assert game24.is_terminal(mid_game([24]))
        assert game24.reward(mid_game([24])) == 1.0
        assert game24.reward(mid_game([23])) == -1.0
        assert not game24.is_terminal(mid_game([3, 8]))
        with pytest.raises(ContractError):
            game24.reward(mid_game([3, 8]))

    def test_encode_single_24(self):
        feats, mask = game24.encode_state(mid_game([24]))
        assert feats.shape == (12,)
        assert feats[0] == 1.0 and feats[1] == 1.0
        assert not feats[2:8].any()
        assert list(feats[8:]) == [1.0, 0.0, 0.0, 0.0]
        assert not mask.any()

    def test_invariant_construction(self):
        with pytest.raises(InvariantViolation):
            game24.Game24State(numbers=(), exprs=(), history=())
        with pytest.raises(InvariantViolation):
            game24.new_state([3, 8])
        with pytest.raises(InvariantViolation):
            game24.Game24State(numbers=(1.0, 2.0, 3.0, 4.0), exprs=(None,) * 4,
                               history=())

    def test_parse_errors(self):
        with pytest.raises(StateParseError):
            game24.parse_state_text("2 9 x")
        with pytest.raises(StateParseError):
            game24.parse_state_text("1 2 3 4 5")

    @given(game24_boards(), st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_conservation_and_expression(self, values, pyrng):
        state = game24.new_state(values)
        while not game24.is_terminal(state):
            actions = game24.legal_actions(state)
            before = len(state.numbers)
            state = game24.apply(state, pyrng.choice(actions))
            assert len(state.numbers) == before - 1
            assert len(state.history) + len(state.numbers) == 4
        assert _eval_expr(state.exprs[0]) == state.numbers[0]

    @given(game24_boards())
    @settings(max_examples=40, deadline=None)
    def test_round_trip_and_mask(self, values):
        state = game24.new_state(values)
        assert game24.parse_state_text(game24.format_state_text(state)) == state
        mask = game24.action_mask(state)
        legal = set(game24.legal_actions(state))
        assert all(bool(mask[a]) == (a in legal) for a in range(36))

    def test_solvable_paper_examples(self):
        assert game24.solvable_24([9, 14])[0] is False
        ok, witness = game24.solvable_24([4, 6, 10, 10])
        assert ok and witness is not None
        assert game24.solvable_24([1, 1, 1, 1])[0] is False

    def test_solvable_agrees_with_independent_enumerator(self):
        with open(GAME24_CSV, encoding="utf-8") as fh:
            boards = [tuple(int(x) for x in line.split(","))
                      for line in fh if line.strip()]
        assert len(boards) == 1362
        for board in boards:
            assert game24.solvable_24(board)[0] == _brute_solvable(board), board

    def test_census_order_spot_check(self):
        # The dataset file lists boards easiest first. Re-counting the full
        # census takes minutes, so check monotonicity on a seeded sample.
        with open(GAME24_CSV, encoding="utf-8") as fh:
            boards = [tuple(int(x) for x in line.split(","))
                      for line in fh if line.strip()]
        rng = np.random.default_rng(0)
        picks = sorted(rng.choice(len(boards), size=25, replace=False))
        counts = [len(game24.enumerate_solution_sequences(boards[i]))
                  for i in picks]
        assert counts == sorted(counts, reverse=True)
        assert all(count > 0 for count in counts)


def _eval_expr(expr) -> Fraction:
    if expr.is_atom:
        return expr.value
    a, b = _eval_expr(expr.first), _eval_expr(expr.second)
    return {"+": a + b, "-": a - b, "*": a * b,
            "/": a / b if b != 0 else None}[expr.op]


def _brute_solvable(values) -> bool:
    """Independent oracle: ordered-pair recursion with plain 4-op arithmetic."""
    def rec(nums):
        if len(nums) == 1:
            return nums[0] == 24
        for i, j in itertools.permutations(range(len(nums)), 2):
            rest = [nums[k] for k in range(len(nums)) if k not in (i, j)]
            a, b = nums[i], nums[j]
            candidates = [a + b, a - b, a * b]
            if b != 0:
                candidates.append(a / b)
            for value in candidates:
                if rec(rest + [value]):
                    return True
        return False
    return rec([Fraction(v) for v in values])


# ------------------------------------------------------------------ 8-Puzzle

class TestPuzzle8:
    def test_legal_moves_top_left_blank(self):
        labels = [puzzle8.MOVES[a] for a in puzzle8.legal_actions(puzzle8.GOAL)]
        assert labels == ["Right", "Down"]

    def test_apply_moves_blank(self):
        state = puzzle8.new_state([1, 4, 2, 3, 0, 5, 6, 7, 8])
        assert puzzle8.apply(state, puzzle8.MOVES.index("Left")) == \
            (1, 4, 2, 0, 3, 5, 6, 7, 8)
        assert puzzle8.apply(state, puzzle8.MOVES.index("Up")) == \
            (1, 0, 2, 3, 4, 5, 6, 7, 8)

    def test_illegal_move(self):
        with pytest.raises(IllegalMoveError):
            puzzle8.apply(puzzle8.GOAL, puzzle8.MOVES.index("Left"))

    def test_unsolvable_rejected(self):
        with pytest.raises(UnsolvableStateError):
            puzzle8.new_state([0, 2, 1, 3, 4, 5, 6, 7, 8])

    def test_terminal_rules(self):
        assert puzzle8.is_terminal(puzzle8.GOAL, 2)
        wandering = puzzle8.new_state([1, 0, 2, 3, 4, 5, 6, 7, 8])
        assert not puzzle8.is_terminal(wandering, 3)
        assert puzzle8.is_terminal(wandering, 9)
        with pytest.raises(ContractError):
            puzzle8.is_terminal(wandering, 10)

    def test_rewards(self):
        assert puzzle8.reward(puzzle8.GOAL, 0) == 0.0
        state = puzzle8.new_state([3, 1, 2, 6, 4, 5, 7, 8, 0])
        assert puzzle8.reward(state, 9) == -4.0

    def test_diameter(self):
        dist = tables.puzzle8_distances()
        reachable = dist[dist != tables.UNREACHABLE]
        assert int(reachable.max()) == 31
        assert len(reachable) == 181440

    def test_encode(self):
        feats, mask = puzzle8.encode_state(puzzle8.GOAL)
        assert feats.shape == (81,) and feats.sum() == 9.0
        legal = set(puzzle8.legal_actions(puzzle8.GOAL))
        assert all(bool(mask[a]) == (a in legal) for a in range(4))

    def test_goal_format(self):
        assert puzzle8.format_state_text(puzzle8.GOAL) == "0 1 2\n3 4 5\n6 7 8"

    def test_parse_errors(self):
        with pytest.raises(StateParseError):
            puzzle8.parse_state_text("0 1 2\n3 4 5\n6 7")
        with pytest.raises(StateParseError):
            puzzle8.parse_state_text("0 1 2 3 4 5 6 7 9")

    @given(puzzle8_states(), st.data())
    @settings(max_examples=50, deadline=None)
    def test_reversibility_and_distance_step(self, state, data):
        action = data.draw(st.sampled_from(puzzle8.legal_actions(state)))
        after = puzzle8.apply(state, action)
        opposite = {"Left": "Right", "Right": "Left",
                    "Up": "Down", "Down": "Up"}[puzzle8.MOVES[action]]
        assert puzzle8.apply(after, puzzle8.MOVES.index(opposite)) == state
        assert abs(puzzle8.goal_distance(after) - puzzle8.goal_distance(state)) <= 1

    @given(puzzle8_states())
    @settings(max_examples=30, deadline=None)
    def test_round_trip(self, state):
        assert puzzle8.parse_state_text(puzzle8.format_state_text(state)) == state


# --------------------------------------------------------------- Pocket cube

class TestCube:
    def test_nine_moves_always(self):
        assert [cube.action_label(cube.BASE_STATE, a) for a in
                cube.legal_actions(cube.BASE_STATE)] == list(cube.SOLVER_MOVES)

    def test_quarter_and_half_turn_orders(self):
        for move in ("U", "R", "F"):
            state = cube.BASE_STATE
            for _ in range(4):
                state = cube.apply_move(state, move)
            assert state == cube.BASE_STATE
            twice = cube.apply_move(cube.apply_move(cube.BASE_STATE, move + "2"),
                                    move + "2")
            assert twice == cube.BASE_STATE

    def test_inverses(self):
        for action, label in enumerate(cube.SOLVER_MOVES):
            inverse = {"U": "U'", "U'": "U", "U2": "U2", "R": "R'", "R'": "R",
                       "R2": "R2", "F": "F'", "F'": "F", "F2": "F2"}[label]
            state = cube.apply(cube.BASE_STATE, action)
            assert cube.apply_move(state, inverse) == cube.BASE_STATE

    def test_goal_is_color_agnostic(self):
        rotated = cube.apply_move(cube.BASE_STATE, "x")
        assert cube.goal_reached(rotated)
        assert cube.goal_distance(rotated) == 0

    def test_distances(self):
        assert cube.goal_distance(cube.BASE_STATE) == 0
        assert cube.goal_distance(cube.apply_move(cube.BASE_STATE, "U")) == 1
        scrambled = cube.BASE_STATE
        for move in ("F", "U", "R'"):
            scrambled = cube.apply_move(scrambled, move)
        assert cube.goal_distance(scrambled) == 3

    def test_diameter(self):
        assert int(tables.cube_distances()[1].max()) == 11

    def test_terminal_rules(self):
        turned = cube.apply_move(cube.BASE_STATE, "R")
        assert not cube.is_terminal(turned, 3)
        assert cube.is_terminal(turned, 4)
        assert cube.is_terminal(cube.BASE_STATE, 2)
        with pytest.raises(ContractError):
            cube.is_terminal(turned, 5)

    def test_rewards(self):
        assert cube.reward(cube.BASE_STATE, 0) == 0.0
        turned = cube.apply_move(cube.BASE_STATE, "R2")
        assert cube.reward(turned, 4) == -1.0

    def test_encode(self):
        feats, mask = cube.encode_state(cube.BASE_STATE)
        assert feats.shape == (144,) and feats.sum() == 24.0
        assert mask.all() and mask.shape == (9,)

    def test_sticker_count_invariant(self):
        with pytest.raises(InvariantViolation):
            cube.new_state((0,) * 24)

    def test_parse_errors(self):
        text = cube.format_state_text(cube.BASE_STATE)
        assert cube.parse_state_text(text) == cube.BASE_STATE
        with pytest.raises(StateParseError):
            cube.parse_state_text(text.replace("Back:", "Rear:"))

    @given(cube_states(), st.data())
    @settings(max_examples=50, deadline=None)
    def test_distance_step_and_round_trip(self, state, data):
        action = data.draw(st.integers(0, 8))
        after = cube.apply(state, action)
        assert abs(cube.goal_distance(after) - cube.goal_distance(state)) <= 1
        assert cube.parse_state_text(cube.format_state_text(state)) == state


# ---------------------------------------------------------------- generators

class TestGenerators:
    def test_puzzle8_instances(self):
        states = datasets.generate_instances("puzzle8", 419, seed=7)
        assert len(states) == len(set(states)) == 419
        assert all(1 <= puzzle8.goal_distance(s) <= 9 for s in states)

    def test_cube_instances(self):
        states = datasets.generate_instances("cube", 200, seed=7)
        assert len(states) == len(set(states)) == 200
        assert all(1 <= cube.goal_distance(s) <= 4 for s in states)

    def test_count_zero_rejected(self):
        with pytest.raises(ContractError):
            datasets.generate_instances("puzzle8", 0, seed=0)

    def test_exhaustion(self):
        # The depth-limited cube shell holds far fewer than 50k states, so a
        # capped attempt budget must fail loudly instead of spinning.
        with pytest.raises(GenerationExhaustedError):
            datasets.generate_instances("cube", 50_000, seed=0,
                                        max_attempts=2000)

    def test_deterministic(self):
        a = datasets.generate_instances("cube", 50, seed=3)
        b = datasets.generate_instances("cube", 50, seed=3)
        assert a == b

    def test_split_assignment(self):
        splits = datasets.assign_splits(419, 119, seed=0)
        assert splits.count("test") == 119 and splits.count("train") == 300
        assert datasets.assign_splits(419, 119, seed=0) == splits
        assert datasets.assign_splits(419, 119, seed=1) != splits

    def test_instance_file_round_trip(self, tmp_path):
        states = datasets.generate_instances("puzzle8", 12, seed=1)
        splits = datasets.assign_splits(12, 4, seed=1)
        path = str(tmp_path / "instances.jsonl")
        datasets.write_instances(path, "puzzle8", states, splits)
        train = datasets.read_instances(path, split="train")
        test = datasets.read_instances(path, split="test")
        assert len(train) == 8 and len(test) == 4
        assert [s for _, s in train + test] == list(states)[:0] + \
            [s for s, lab in zip(states, splits) if lab == "train"] + \
            [s for s, lab in zip(states, splits) if lab == "test"]
