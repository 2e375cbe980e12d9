"""PUCT-guided Monte Carlo Tree Search over the task MDPs.

Selection maximizes Q(s,a) + w * P(s,a) * sqrt(N(s)) / (1 + N(s,a)) with
single-player backups (no sign alternation). Node visit counts follow
N(s) = sum_a N(s,a) + 1, the extra 1 being the evaluation visit, so the
sqrt term is already >= 1 the first time a node selects among children.

Search itself is deterministic; randomness enters only when moves are
sampled from visit counts (self-play) or optional Dirichlet root noise is
switched on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError

GAMMA_ARGMAX = 1e-2  # temperatures at or below this collapse to argmax


@dataclass
class SearchConfig:
    simulations: int = 20
    exploration_weight: float = 1.0
    temperature: float = 1.0
    seed: Optional[int] = None
    horizon: Optional[int] = None  # None: use the task's own
    reuse_tree: bool = True
    eval_cache: bool = True
    dirichlet_alpha: Optional[float] = None
    dirichlet_fraction: float = 0.25

    def __post_init__(self):
        if self.simulations < 1:
            raise ContractError("simulations must be >= 1")
        if self.exploration_weight <= 0:
            raise ContractError("exploration_weight must be > 0")
        if self.temperature <= 0:
            raise ContractError("temperature must be > 0")


class Evaluator:
    """Counts logical f_theta evaluations; optionally caches by encoded state.

    `requests` counts every evaluation asked for (one per node expansion),
    which is what an implementation without a transposition cache would
    execute and is the number reported as f_theta calls. `calls` counts cache
    misses, i.e. forward computations actually run here; the cache only saves
    compute because the three MDPs reach the same position along many search
    paths (Game of 24 states collapse onto number multisets).
    """

    def __init__(self, network, cache: bool = True):
        self.network = network
        self.requests = 0
        self.calls = 0
        self._cache = {} if cache else None

    def evaluate(self, features, mask):
        self.requests += 1
        if self._cache is None:
            self.calls += 1
            return self.network.forward(features, mask)
        key = (features.tobytes(), mask.tobytes())
        found = self._cache.get(key)
        if found is None:
            self.calls += 1
            found = self.network.forward(features, mask)
            self._cache[key] = found
        return found


class Node:
    __slots__ = ("state", "steps", "expanded", "terminal", "value", "legal",
                 "priors", "N", "W", "Q", "children", "visits")

    def __init__(self, state, steps: int):
        self.state = state
        self.steps = steps
        self.expanded = False
        self.terminal = False
        self.value = 0.0
        self.legal = None
        self.priors = None
        self.N = None
        self.W = None
        self.Q = None
        self.children = {}
        self.visits = 0


def expand_evaluate(node: Node, task, evaluator: Evaluator, horizon=None) -> float:
    """Evaluate a fresh node: true reward for terminals (no network), priors
    plus v_theta otherwise. Counts as the node's first visit."""
    if node.expanded:
        raise ContractError("node is already expanded")
    if horizon is None:
        horizon = task.horizon
    if task.is_terminal(node.state, node.steps, horizon):
        node.terminal = True
        node.value = task.normalized_reward(node.state, node.steps, horizon)
        node.legal = []
    else:
        features, mask = task.encode_state(node.state)
        priors, v = evaluator.evaluate(features, mask)
        node.legal = [int(a) for a in np.flatnonzero(mask)]
        node.priors = priors
        a_max = mask.shape[0]
        node.N = np.zeros(a_max, dtype=np.int64)
        node.W = np.zeros(a_max, dtype=np.float64)
        node.Q = np.zeros(a_max, dtype=np.float64)
        node.value = v
    node.expanded = True
    node.visits += 1
    return node.value


def puct_select(node: Node, exploration_weight: float) -> int:
    """Argmax of the selection score over legal actions, lowest index on ties."""
    if not node.expanded or node.terminal:
        raise ContractError("puct_select needs an expanded non-terminal node")
    legal = node.legal
    q = node.Q[legal]
    u = exploration_weight * node.priors[legal] * np.sqrt(node.visits) / (1.0 + node.N[legal])
    return legal[int(np.argmax(q + u))]


def backpropagate(path, value: float) -> None:
    """Add one visit carrying `value` to every edge on a root-to-leaf path."""
    if not path:
        raise ContractError("path must be nonempty")
    for node, action in path:
        node.N[action] += 1
        node.W[action] += value
        node.Q[action] = node.W[action] / node.N[action]
        node.visits += 1


def _simulate(root: Node, task, evaluator: Evaluator, config: SearchConfig):
    node = root
    path = []
    while node.expanded and not node.terminal:
        action = puct_select(node, config.exploration_weight)
        path.append((node, action))
        child = node.children.get(action)
        if child is None:
            child = Node(task.apply(node.state, action), node.steps + 1)
            node.children[action] = child
        node = child
    if node.expanded:  # terminal node met again: reuse its true reward
        value = node.value
        node.visits += 1
    else:
        value = expand_evaluate(node, task, evaluator, config.horizon)
    if path:
        backpropagate(path, value)
    return path, value


def run_simulations(root: Node, task, evaluator: Evaluator, config: SearchConfig,
                    rng=None, trace_file=None) -> None:
    """K selection->evaluation->backpropagation cycles from `root`."""
    done = 0
    if not root.expanded:
        path, value = _simulate(root, task, evaluator, config)
        _trace(trace_file, done, path, value)
        done += 1
    if config.dirichlet_alpha is not None and rng is not None and root.legal:
        noise = rng.dirichlet([config.dirichlet_alpha] * len(root.legal))
        frac = config.dirichlet_fraction
        root.priors[root.legal] = (1 - frac) * root.priors[root.legal] + frac * noise
    while done < config.simulations:
        path, value = _simulate(root, task, evaluator, config)
        _trace(trace_file, done, path, value)
        done += 1


def _trace(trace_file, index, path, value):
    if trace_file is None:
        return
    record = {"simulation": index, "path": [int(a) for _, a in path], "value": float(value)}
    trace_file.write(json.dumps(record) + "\n")


def visit_policy(node: Node, gamma: float) -> np.ndarray:
    """Action distribution eps_a proportional to N(s,a)^(1/gamma), full width;
    gamma <= 0.01 is the argmax limit."""
    if node.N is None or node.N.sum() == 0:
        raise ContractError("visit_policy needs at least one visited edge")
    counts = node.N.astype(np.float64)
    probs = np.zeros_like(counts)
    if gamma <= GAMMA_ARGMAX:
        probs[int(np.argmax(counts))] = 1.0
        return probs
    visited = counts > 0
    logs = np.log(counts[visited]) / gamma
    stable = np.exp(logs - logs.max())
    probs[visited] = stable / stable.sum()
    return probs


@dataclass
class StepRecord:
    state_before: object
    action: int
    state_after: object
    features: np.ndarray
    mask: np.ndarray
    policy_target: np.ndarray  # visit distribution at gamma = 1
    visit_counts: np.ndarray


@dataclass
class Episode:
    task_name: str
    steps: list
    final_state: object
    initial_steps: int
    ftheta_calls: int
    solved: bool

    @property
    def actions(self):
        return [s.action for s in self.steps]


def act_sequence(task, state, network, config: SearchConfig, select: str = "argmax",
                 rng=None, initial_steps: int = 0, evaluator: Optional[Evaluator] = None,
                 trace_file=None) -> Episode:
    """Play one problem to termination, running K simulations per move.

    select="argmax" picks the most-visited action (evaluation); "sample"
    draws from visit counts tempered by config.temperature (self-play). The
    recorded policy targets always use gamma = 1. The subtree under the
    chosen action is reused for the next move unless config.reuse_tree is
    off; either way the f_theta call counter is cumulative and exact.
    """
    if select not in ("argmax", "sample"):
        raise ContractError(f"select must be 'argmax' or 'sample', not {select!r}")
    if rng is None and config.seed is not None:
        rng = np.random.default_rng(config.seed)
    if select == "sample" and rng is None:
        raise ContractError("sampled selection needs an rng or a seeded config")
    own_evaluator = evaluator is None
    if own_evaluator:
        evaluator = Evaluator(network, cache=config.eval_cache)
    calls_before = evaluator.requests
    horizon = config.horizon if config.horizon is not None else task.horizon

    node = Node(state, initial_steps)
    steps = []
    while not task.is_terminal(node.state, node.steps, horizon):
        run_simulations(node, task, evaluator, config, rng=rng, trace_file=trace_file)
        target = visit_policy(node, 1.0)
        if select == "argmax":
            action = int(np.argmax(node.N))
        else:
            probs = visit_policy(node, config.temperature)
            action = int(rng.choice(probs.shape[0], p=probs))
        features, mask = task.encode_state(node.state)
        child = node.children.get(action)
        if child is None:
            child = Node(task.apply(node.state, action), node.steps + 1)
        steps.append(StepRecord(
            state_before=node.state,
            action=action,
            state_after=child.state,
            features=features,
            mask=mask,
            policy_target=target,
            visit_counts=node.N.copy(),
        ))
        if config.reuse_tree:
            node = child
        else:
            node = Node(child.state, child.steps)

    return Episode(
        task_name=task.name,
        steps=steps,
        final_state=node.state,
        initial_steps=initial_steps,
        ftheta_calls=evaluator.requests - calls_before,
        solved=task.goal_reached(node.state),
    )
