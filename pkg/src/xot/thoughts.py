"""Thought trajectories: extraction from finished searches, prompt rendering,
and parsing of answers back into verified action sequences.

A thought is a state/action chain through one of the task MDPs. Rendering is
byte-stable: the same trajectory always produces the same prompt text, and
every state block in a prompt equals the environment's own text form of the
replayed state.
"""

from __future__ import annotations

import ast
import hashlib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional

import numpy as np

from . import mcts, templates
from .envs import cube as cube_env
from .envs import game24 as game24_env
from .envs import get_task
from .envs import puzzle8 as puzzle8_env
from .errors import AnswerParseError, ContractError, TrajectoryValidationError

MAX_SOLUTIONS = 3


@dataclass(frozen=True)
class ThoughtStep:
    state_before: object
    action: int
    state_after: object


@dataclass
class ThoughtTrajectory:
    """One state/action chain. `complete=False` marks a thought whose final
    step should be withheld when rendered (the steps themselves stay intact)."""

    task_name: str
    steps: List[ThoughtStep]
    complete: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.steps:
            raise TrajectoryValidationError("trajectory has no steps")
        task = get_task(self.task_name)
        for k, step in enumerate(self.steps, 1):
            if task.apply(step.state_before, step.action) != step.state_after:
                raise TrajectoryValidationError(
                    f"step {k}: state_after does not follow from the action")
            if k > 1 and self.steps[k - 2].state_after != step.state_before:
                raise TrajectoryValidationError(f"step {k}: broken chain")
        if self.task_name == "game24" and self.complete and len(self.steps) != 3:
            raise TrajectoryValidationError(
                f"complete game24 trajectories have 3 steps, got {len(self.steps)}")

    @property
    def initial_state(self):
        return self.steps[0].state_before

    @property
    def final_state(self):
        return self.steps[-1].state_after

    @property
    def actions(self):
        return tuple(s.action for s in self.steps)

    def solved(self) -> bool:
        return get_task(self.task_name).goal_reached(self.final_state)


@dataclass
class ThoughtSet:
    """Ranked distinct trajectories for one problem, at most MAX_SOLUTIONS."""

    task_name: str
    trajectories: List[ThoughtTrajectory]
    counts: List[int] = field(default_factory=list)  # sample occurrences, aligned
    samples: int = 0        # rollouts drawn
    distinct: int = 0       # distinct action sequences seen before the cap
    ftheta_calls: int = 0

    def __post_init__(self):
        if len(self.trajectories) > MAX_SOLUTIONS:
            raise ContractError(f"at most {MAX_SOLUTIONS} trajectories may be kept")
        seqs = [t.actions for t in self.trajectories]
        if len(set(seqs)) != len(seqs):
            raise ContractError("trajectories must have distinct action sequences")


def extract_single(task, episode: mcts.Episode) -> ThoughtTrajectory:
    """Repackage an argmax-played episode as a trajectory.

    Each recorded action must be the most-visited one at its state; the
    episode must have reached a terminal state.
    """
    if not episode.steps:
        raise ContractError("episode is empty")
    if not task.is_terminal(episode.final_state,
                            episode.initial_steps + len(episode.steps)):
        raise ContractError("episode did not reach a terminal state")
    for rec in episode.steps:
        if rec.action != int(np.argmax(rec.visit_counts)):
            raise ContractError("episode action is not the highest-visit action")
    steps = [ThoughtStep(r.state_before, r.action, r.state_after)
             for r in episode.steps]
    return ThoughtTrajectory(task_name=task.name, steps=steps)


def extract_multi(task, problem, network, config: Optional[mcts.SearchConfig] = None,
                  samples: Optional[int] = None, max_solutions: int = MAX_SOLUTIONS,
                  rng=None, evaluator: Optional[mcts.Evaluator] = None) -> ThoughtSet:
    """Sample whole rollouts from per-state searches and keep the most
    frequent distinct ones.

    At each state the next action is drawn proportionally to that state's
    visit counts; states met for the first time get their own fresh search.
    Searches are memoized by state, so repeat visits across rollouts reuse
    both the tree and the evaluation cache.
    """
    if samples is None:
        samples = task.default_multi_samples
    if samples < 1:
        raise ContractError("samples must be >= 1")
    if not 1 <= max_solutions <= MAX_SOLUTIONS:
        raise ContractError(f"max_solutions must be 1..{MAX_SOLUTIONS}")
    if config is None:
        config = mcts.SearchConfig(simulations=task.default_simulations)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    own = evaluator is None
    if own:
        evaluator = mcts.Evaluator(network, cache=config.eval_cache)
    calls_before = evaluator.requests

    searched = {}  # state -> searched root Node

    def root_for(state, steps):
        node = searched.get(state)
        if node is None:
            node = mcts.Node(state, steps)
            mcts.run_simulations(node, task, evaluator, config, rng=rng)
            searched[state] = node
        return node

    seen = {}  # action tuple -> [count, order index, trajectory]
    for _ in range(samples):
        state = problem
        depth = 0
        steps = []
        while not task.is_terminal(state, depth):
            node = root_for(state, depth)
            counts = node.N.astype(np.float64)
            total = counts.sum()
            if total > 0:
                probs = counts / total
            else:
                # single-simulation search: no child visits, fall back to priors
                probs = np.zeros_like(counts)
                probs[node.legal] = node.priors[node.legal]
                probs /= probs.sum()
            action = int(rng.choice(probs.shape[0], p=probs))
            after = task.apply(state, action)
            steps.append(ThoughtStep(state, action, after))
            state = after
            depth += 1
        key = tuple(s.action for s in steps)
        entry = seen.get(key)
        if entry is None:
            seen[key] = [1, len(seen), ThoughtTrajectory(task.name, steps)]
        else:
            entry[0] += 1

    ranked = sorted(seen.values(), key=lambda e: (-e[0], e[1]))[:max_solutions]
    return ThoughtSet(
        task_name=task.name,
        trajectories=[e[2] for e in ranked],
        counts=[e[0] for e in ranked],
        samples=samples,
        distinct=len(seen),
        ftheta_calls=evaluator.requests - calls_before,
    )


# ---------------------------------------------------------------------------
# rendering

def _game24_step_line(state_after) -> str:
    exprs = ", ".join(e.render_inline() for e in state_after.exprs)
    left = game24_env.format_state_text(state_after)
    return f"{state_after.history[-1]} (left: {left}) Expression: {exprs}"


def _move_options(task, state) -> str:
    return ", ".join(task.action_label(state, a) for a in task.legal_actions(state))


def render_prompt(task, thought) -> str:
    """Render a trajectory (or a ThoughtSet, concatenated) as the user-facing
    solve prompt. Incomplete trajectories render without their final step and
    without the closing answer section."""
    if isinstance(thought, ThoughtSet):
        return "\n\n".join(render_prompt(task, t) for t in thought.trajectories)
    t = thought
    if t.task_name != task.name:
        raise ContractError(f"trajectory is for {t.task_name!r}, not {task.name!r}")
    shown = t.steps if t.complete else t.steps[:-1]

    if task.name == "game24":
        lines = [f"Input: {task.format_state_text(t.initial_state)}", "Steps:"]
        lines += [_game24_step_line(s.state_after) for s in shown]
        if t.complete:
            answer = t.final_state.exprs[0].render_answer()
            lines.append(f"Answer: {answer} = 24")
        return "\n".join(lines)

    if task.name == "puzzle8":
        init = task.format_state_text(t.initial_state)
        lines = [templates.PUZZLE8_SOLVE_PREAMBLE, "[Initial State]:", init,
                 "[Process]:", init]
        for k, s in enumerate(shown, 1):
            lines += [f"Step {k}: Choose one valid move from: [{_move_options(task, s.state_before)}]",
                      f"Move: {task.action_label(s.state_before, s.action)}",
                      "Current State:",
                      task.format_state_text(s.state_after)]
        if t.complete:
            moves = ", ".join(task.action_label(s.state_before, s.action) for s in t.steps)
            lines += ["Finished.", "[Moves]:", moves]
        return "\n".join(lines)

    if task.name == "cube":
        lines = [templates.CUBE_SOLVE_PREAMBLE, "[Initial Cube State]:",
                 task.format_state_text(t.initial_state), "[Process]:"]
        for k, s in enumerate(shown, 1):
            lines += [f"[Step {k}]",
                      f"[Move] {task.action_label(s.state_before, s.action)}",
                      "[Current Cube State]",
                      task.format_state_text(s.state_after)]
        if t.complete:
            moves = " ".join(task.action_label(s.state_before, s.action) for s in t.steps)
            lines += ["Finished.",
                      "Now strictly follow the above process to form Restoration Moves.",
                      "[Restoration Moves]:", moves]
        return "\n".join(lines)

    raise ContractError(f"no renderer for task {task.name!r}")


def render_revision(task, trajectory: ThoughtTrajectory) -> str:
    """Render the critique request for a (typically failed) trajectory."""
    t = trajectory
    if t.task_name != task.name:
        raise ContractError(f"trajectory is for {t.task_name!r}, not {task.name!r}")

    if task.name == "game24":
        lines = [templates.GAME24_REVISION_HEADER,
                 f"Input: {task.format_state_text(t.initial_state)}", "Steps:"]
        lines += [f"[Steps {k}] {_game24_step_line(s.state_after)}"
                  for k, s in enumerate(t.steps, 1)]
        return "\n".join(lines)

    if task.name == "puzzle8":
        init = task.format_state_text(t.initial_state)
        lines = [templates.PUZZLE8_REVISION_HEADER, "[Initial State]:", init,
                 "[Process]", init]
        for k, s in enumerate(t.steps, 1):
            lines += [f"Step {k}: Choose one valid move from: [{_move_options(task, s.state_before)}]",
                      task.action_label(s.state_before, s.action),
                      task.format_state_text(s.state_after)]
        lines.append("Finished.")
        final = t.final_state
        misplaced = [str(tile) for pos, tile in enumerate(final) if tile != pos]
        if misplaced:
            lines.append(templates.PUZZLE8_REVISION_TRAILER.format(
                tiles=", ".join(misplaced)))
        lines.append(templates.REVISION_ASK)
        return "\n".join(lines)

    if task.name == "cube":
        lines = [templates.CUBE_REVISION_HEADER, "[Initial Cube State]:",
                 task.format_state_text(t.initial_state), "[Process]:"]
        for k, s in enumerate(t.steps, 1):
            lines += [f"[Step {k}]",
                      f"[Move] {task.action_label(s.state_before, s.action)}",
                      "[Current Cube State]",
                      task.format_state_text(s.state_after)]
        lines.append("Finished.")
        final = t.final_state
        sentences = []
        for f, name in enumerate(cube_env.FACE_NAMES):
            colors = len(set(final[4 * f:4 * f + 4]))
            if colors > 1:
                sentences.append(templates.CUBE_FACE_SENTENCE.format(face=name, count=colors))
        if sentences:
            lines.append("After finishing all the moves: " + " ".join(sentences))
            lines.append(templates.CUBE_REVISION_TRAILER)
        lines.append(templates.REVISION_ASK)
        return "\n".join(lines)

    raise ContractError(f"no revision renderer for task {task.name!r}")


# ---------------------------------------------------------------------------
# parsing

_NUM = r"-?\d+(?:/\d+)?"
_EQUATION = re.compile(
    rf"^\s*(?:\[Steps?\s*\d+\]\s*)?({_NUM})\s*([+\-*/])\s*({_NUM})\s*=\s*({_NUM})\s*(?:\(left:.*)?$")


def _canon(num_text: str) -> str:
    return game24_env.num_str(Fraction(num_text))


def _match_game24_action(task, state, x, op, y) -> Optional[int]:
    """Legal action whose printed equation combines x and y with op."""
    wanted = {f"{x} {op} {y}"}
    if op in ("+", "*"):
        wanted.add(f"{y} {op} {x}")
    for action in task.legal_actions(state):
        line = task.apply(state, action).history[-1]
        if line.split(" = ")[0] in wanted:
            return action
    return None


def _parse_game24_steps(task, text, initial_state):
    """Replay 'a op b = c' lines; None when they do not form a full solution."""
    state = initial_state
    steps = []
    for raw in text.split("\n"):
        m = _EQUATION.match(raw)
        if m is None:
            continue
        if task.is_terminal(state, len(steps)):
            break
        x, op, y, z = m.groups()
        try:
            x, y, z = _canon(x), _canon(y), _canon(z)
        except (ValueError, ZeroDivisionError):
            return None
        action = _match_game24_action(task, state, x, op, y)
        if action is None:
            return None
        after = task.apply(state, action)
        if game24_env.num_str(after.numbers[-1]) != z:
            return None  # stated result disagrees with arithmetic
        steps.append(ThoughtStep(state, action, after))
        state = after
    if steps and task.is_terminal(state, len(steps)):
        return steps
    return None


_ALLOWED_OPS = {ast.Add: "+", ast.Sub: "-", ast.Mult: "*", ast.Div: "/"}


def _expression_specs(payload: str):
    """(x, op, y) triples in evaluation (post) order for an arithmetic text."""
    try:
        tree = ast.parse(payload, mode="eval")
    except SyntaxError as e:
        raise AnswerParseError(f"bad expression {payload!r}", position=e.offset)
    specs = []

    def walk(node) -> Fraction:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return Fraction(node.value)
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -walk(node.operand)
        if isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_OPS:
            left = walk(node.left)
            right = walk(node.right)
            op = _ALLOWED_OPS[type(node.op)]
            if op == "/" and right == 0:
                raise AnswerParseError("division by zero in expression")
            specs.append((left, op, right))
            return _apply_op(left, op, right)
        raise AnswerParseError(f"unsupported syntax in expression {payload!r}")

    walk(tree)
    return specs


def _apply_op(a: Fraction, op: str, b: Fraction) -> Fraction:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    return a / b


def _answer_payload(task, text: str) -> str:
    marker = templates.ANSWER_MARKERS[task.name]
    idx = text.rfind(marker)
    if idx < 0:
        raise AnswerParseError(f"no {marker!r} marker in response")
    payload = text[idx + len(marker):]
    if task.name == "game24":
        return payload.split("\n", 1)[0].split("=", 1)[0].strip()
    for line in payload.split("\n"):
        if line.strip():
            return line.strip()
    raise AnswerParseError(f"nothing after {marker!r} marker")


def _parse_game24(task, text, initial_state):
    steps = _parse_game24_steps(task, text, initial_state)
    if steps is not None:
        return steps
    payload = _answer_payload(task, text)
    if not payload:
        raise AnswerParseError("empty expression after 'Answer:'")
    state = initial_state
    steps = []
    for k, (left, op, right) in enumerate(_expression_specs(payload), 1):
        x, y = game24_env.num_str(left), game24_env.num_str(right)
        action = _match_game24_action(task, state, x, op, y)
        if action is None:
            raise TrajectoryValidationError(
                f"step {k}: no legal way to compute {x} {op} {y}")
        after = task.apply(state, action)
        steps.append(ThoughtStep(state, action, after))
        state = after
    if not task.is_terminal(state, len(steps)):
        raise TrajectoryValidationError("expression does not use all four numbers")
    return steps


def _parse_moves(task, text, initial_state):
    payload = _answer_payload(task, text)
    tokens = [tok for tok in payload.replace(",", " ").split() if tok]
    if not tokens:
        raise AnswerParseError("no moves in answer")
    if len(tokens) > task.horizon:
        raise TrajectoryValidationError(
            f"{len(tokens)} moves exceed the {task.horizon}-step budget")
    parse_move = cube_env.parse_move if task.name == "cube" else puzzle8_env.parse_move
    state = initial_state
    steps = []
    for k, tok in enumerate(tokens, 1):
        try:
            action = parse_move(tok.upper() if task.name == "cube" else tok)
        except Exception:
            raise TrajectoryValidationError(f"step {k}: unknown move {tok!r}")
        if action not in task.legal_actions(state):
            raise TrajectoryValidationError(f"step {k}: move {tok!r} is illegal here")
        after = task.apply(state, action)
        steps.append(ThoughtStep(state, action, after))
        state = after
    return steps


def parse_trajectory(task, text: str, initial_state) -> ThoughtTrajectory:
    """Parse an answer text back into a trajectory, replaying every action
    through the environment. Raises AnswerParseError for missing or garbled
    answers and TrajectoryValidationError for illegal replayed actions."""
    if task.name == "game24":
        steps = _parse_game24(task, text, initial_state)
    elif task.name in ("puzzle8", "cube"):
        steps = _parse_moves(task, text, initial_state)
    else:
        raise ContractError(f"no parser for task {task.name!r}")
    return ThoughtTrajectory(task_name=task.name, steps=steps)


# ---------------------------------------------------------------------------
# graph export

def _edge_label(task, step: ThoughtStep) -> str:
    if task.name == "game24":
        return step.state_after.history[-1]
    return task.action_label(step.state_before, step.action)


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def export_dot(task, thought) -> str:
    """Merged thought graph in DOT form: one node per distinct state text,
    one labeled edge per distinct transition."""
    if isinstance(thought, ThoughtSet):
        trajectories = thought.trajectories
    elif isinstance(thought, ThoughtTrajectory):
        trajectories = [thought]
    else:
        trajectories = list(thought)

    node_ids = {}
    node_lines = []
    edges = []
    edge_seen = set()

    def node_id(state):
        text = task.format_state_text(state)
        found = node_ids.get(text)
        if found is None:
            found = "s" + hashlib.sha1(text.encode()).hexdigest()[:12]
            node_ids[text] = found
            node_lines.append(f"  {found} [label={_dot_quote(text)}];")
        return found

    for t in trajectories:
        for step in t.steps:
            src = node_id(step.state_before)
            dst = node_id(step.state_after)
            label = _edge_label(task, step)
            key = (src, dst, label)
            if key not in edge_seen:
                edge_seen.add(key)
                edges.append(f"  {src} -> {dst} [label={_dot_quote(label)}];")

    return "\n".join(["digraph thoughts {"] + node_lines + edges + ["}"])
