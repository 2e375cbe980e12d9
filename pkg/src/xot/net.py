"""Policy/value network: a small fully connected trunk (input -> 128 -> 256,
tanh) with a masked-softmax policy head and a tanh value head.

Everything is plain numpy float64 with hand-written reverse-mode gradients:
loss = mean[(v - v_theta)^2 - eps^T log P_theta]. Checkpoints are versioned
JSON carrying the task descriptor, so a cube net cannot be loaded into a
puzzle run by accident.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractError,
    DivergenceError,
    TaskMismatchError,
    UnsupportedVersionError,
)

HIDDEN = (128, 256)
CHECKPOINT_VERSION = 1

# Parameter array names in a fixed order, used by the optimizer and the
# checkpoint format alike.
PARAM_NAMES = ("w1", "b1", "w2", "b2", "wp", "bp", "wv", "bv")


@dataclass
class TrainSample:
    """One (s, eps(s), v(s)) training record.

    target_policy must be a probability vector supported on unmasked actions;
    target_value lies in [-1, 1].
    """

    features: np.ndarray
    mask: np.ndarray
    target_policy: np.ndarray
    target_value: float


class PolicyValueNet:
    """f_theta(s) = (P_theta(s), v_theta(s)) for one task."""

    def __init__(self, task_name: str, input_dim: int, action_space: int, init_seed: int = 0):
        self.task_name = task_name
        self.input_dim = int(input_dim)
        self.action_space = int(action_space)
        self.init_seed = int(init_seed)
        rng = np.random.default_rng(init_seed)
        h1, h2 = HIDDEN

        def he(fan_in, shape):
            return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)

        self.params = {
            "w1": he(input_dim, (input_dim, h1)),
            "b1": np.zeros(h1),
            "w2": he(h1, (h1, h2)),
            "b2": np.zeros(h2),
            "wp": he(h2, (h2, action_space)),
            "bp": np.zeros(action_space),
            "wv": he(h2, (h2, 1)),
            "bv": np.zeros(1),
        }
        self._momentum = {name: np.zeros_like(arr) for name, arr in self.params.items()}

    def num_params(self) -> int:
        return sum(arr.size for arr in self.params.values())

    # ---- forward ----------------------------------------------------------

    def _trunk(self, x):
        p = self.params
        z1 = x @ p["w1"] + p["b1"]
        h1 = np.tanh(z1)
        z2 = h1 @ p["w2"] + p["b2"]
        h2 = np.tanh(z2)
        return z1, h1, z2, h2

    def forward(self, features, mask):
        """Single-state evaluation; probabilities of masked actions are 0."""
        feats = np.asarray(features, dtype=np.float64)
        mask = np.asarray(mask, dtype=bool)
        if feats.shape != (self.input_dim,) or mask.shape != (self.action_space,):
            raise ContractError(
                f"shape mismatch: features {feats.shape}, mask {mask.shape}, "
                f"expected ({self.input_dim},), ({self.action_space},)"
            )
        if not mask.any():
            raise ContractError("mask must have at least one legal action")
        P, v = self._forward_batch(feats[None, :], mask[None, :])
        return P[0], float(v[0])

    def _forward_batch(self, x, masks):
        _, _, _, h2 = self._trunk(x)
        logits = h2 @ self.params["wp"] + self.params["bp"]
        P = masked_softmax(logits, masks)
        v = np.tanh(h2 @ self.params["wv"] + self.params["bv"]).reshape(-1)
        return P, v

    # ---- loss and gradients ------------------------------------------------

    def loss(self, batch) -> float:
        x, masks, eps, v_t = _stack_batch(batch, self.input_dim, self.action_space)
        P, v = self._forward_batch(x, masks)
        return _loss_value(P, v, masks, eps, v_t)

    def gradients(self, batch):
        """Analytic gradients of the mean batch loss, same keys as params."""
        x, masks, eps, v_t = _stack_batch(batch, self.input_dim, self.action_space)
        p = self.params
        B = x.shape[0]

        z1, h1, z2, h2 = self._trunk(x)
        logits = h2 @ p["wp"] + p["bp"]
        P = masked_softmax(logits, masks)
        v_pre = (h2 @ p["wv"] + p["bv"]).reshape(-1)
        v = np.tanh(v_pre)

        # d(mean loss)/dlogits for the cross-entropy term; masked entries
        # carry no gradient (their P and eps are both fixed at 0).
        dlogits = (P - eps) / B
        dlogits[~masks] = 0.0
        # value head: d/dv_pre of mean (v - v_t)^2
        dv_pre = (2.0 * (v - v_t) * (1.0 - v * v)) / B

        grads = {}
        grads["wp"] = h2.T @ dlogits
        grads["bp"] = dlogits.sum(axis=0)
        grads["wv"] = h2.T @ dv_pre[:, None]
        grads["bv"] = np.array([dv_pre.sum()])

        dh2 = dlogits @ p["wp"].T + dv_pre[:, None] @ p["wv"].T
        dz2 = dh2 * (1.0 - h2 * h2)
        grads["w2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)

        dh1 = dz2 @ p["w2"].T
        dz1 = dh1 * (1.0 - h1 * h1)
        grads["w1"] = x.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        return grads

    def train_step(self, batch, learning_rate: float, momentum: float = 0.0):
        """One SGD update; raises DivergenceError (params untouched) on a
        non-finite loss."""
        if learning_rate < 0:
            raise ContractError("learning_rate must be >= 0")
        loss = self.loss(batch)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss {loss}")
        grads = self.gradients(batch)
        for name in PARAM_NAMES:
            if momentum > 0.0:
                self._momentum[name] = momentum * self._momentum[name] + grads[name]
                update = self._momentum[name]
            else:
                update = grads[name]
            self.params[name] = self.params[name] - learning_rate * update
        return loss

    # ---- checkpoints -------------------------------------------------------

    def save_checkpoint(self, path: str) -> None:
        payload = {
            "format_version": CHECKPOINT_VERSION,
            "task": self.task_name,
            "input_dim": self.input_dim,
            "action_space": self.action_space,
            "hidden": list(HIDDEN),
            "init_seed": self.init_seed,
            "arrays": {
                name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
                for name, arr in self.params.items()
            },
        }
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)

    @classmethod
    def load_checkpoint(cls, path: str, expect_task=None) -> "PolicyValueNet":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        version = payload.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise UnsupportedVersionError(f"checkpoint version {version!r}, supported: {CHECKPOINT_VERSION}")
        if expect_task is not None and payload["task"] != expect_task:
            raise TaskMismatchError(f"checkpoint is for {payload['task']!r}, run wants {expect_task!r}")
        net = cls(payload["task"], payload["input_dim"], payload["action_space"],
                  init_seed=payload.get("init_seed", 0))
        for name in PARAM_NAMES:
            entry = payload["arrays"][name]
            arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
            if arr.shape != net.params[name].shape:
                raise TaskMismatchError(f"array {name} has shape {arr.shape}, expected {net.params[name].shape}")
            net.params[name] = arr
        return net


def masked_softmax(logits, masks):
    """Row-wise softmax with masked entries at exactly 0 probability."""
    logits = np.where(masks, logits, -np.inf)
    peak = logits.max(axis=1, keepdims=True)
    exp = np.exp(logits - peak)
    exp = np.where(masks, exp, 0.0)
    return exp / exp.sum(axis=1, keepdims=True)


def _loss_value(P, v, masks, eps, v_t):
    value_term = (v - v_t) ** 2
    logP = np.zeros_like(P)
    active = eps > 0
    logP[active] = np.log(P[active])
    policy_term = -(eps * logP).sum(axis=1)
    return float((value_term + policy_term).mean())


def _stack_batch(batch, input_dim, action_space):
    if len(batch) == 0:
        raise ContractError("batch must be nonempty")
    x = np.stack([np.asarray(s.features, dtype=np.float64) for s in batch])
    masks = np.stack([np.asarray(s.mask, dtype=bool) for s in batch])
    eps = np.stack([np.asarray(s.target_policy, dtype=np.float64) for s in batch])
    v_t = np.array([s.target_value for s in batch], dtype=np.float64)
    if x.shape[1] != input_dim or masks.shape[1] != action_space:
        raise ContractError("batch dimensions do not match the network")
    if not masks.any(axis=1).all():
        raise ContractError("a sample has an all-masked policy")
    if (eps[~masks] != 0).any():
        raise ContractError("target policy puts mass on masked actions")
    return x, masks, eps, v_t
