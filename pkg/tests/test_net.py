import math

import numpy as np
import pytest

from xot.errors import (ContractError, DivergenceError, TaskMismatchError,
                        UnsupportedVersionError)
from xot.net import PolicyValueNet, TrainSample, masked_softmax


def tiny_net(init_seed=0, input_dim=5, actions=4):
    return PolicyValueNet("puzzle8", input_dim, actions, init_seed=init_seed)


def zero_net(input_dim=5, actions=4):
    net = tiny_net(input_dim=input_dim, actions=actions)
    for name in net.params:
        net.params[name] = np.zeros_like(net.params[name])
    return net


def random_batch(net, size, seed=0, eps_mode="random"):
    rng = np.random.default_rng(seed)
    batch = []
    for _ in range(size):
        features = rng.normal(size=net.input_dim)
        mask = np.zeros(net.action_space, dtype=bool)
        legal = rng.choice(net.action_space,
                           size=rng.integers(1, net.action_space + 1),
                           replace=False)
        mask[legal] = True
        eps = np.zeros(net.action_space)
        if eps_mode == "onehot":
            eps[rng.choice(legal)] = 1.0
        else:
            raw = rng.random(len(legal)) + 1e-3
            eps[legal] = raw / raw.sum()
        batch.append(TrainSample(features=features, mask=mask,
                                 target_policy=eps,
                                 target_value=float(rng.uniform(-1, 1))))
    return batch


class TestForward:
    def test_zero_weights_uniform(self):
        net = zero_net()
        mask = np.array([True, False, True, True])
        P, v = net.forward(np.ones(5), mask)
        assert v == 0.0
        np.testing.assert_allclose(P[mask], 1.0 / 3.0, atol=1e-12)
        assert (P[~mask] == 0.0).all()

    def test_singleton_mask(self):
        net = tiny_net(init_seed=3)
        mask = np.array([False, False, True, False])
        P, v = net.forward(np.ones(5), mask)
        assert P[2] == 1.0 and P.sum() == 1.0
        assert -1.0 < v < 1.0

    def test_masked_probabilities_are_zero(self):
        net = tiny_net(init_seed=4)
        rng = np.random.default_rng(1)
        for _ in range(25):
            mask = np.zeros(4, dtype=bool)
            mask[rng.choice(4, size=rng.integers(1, 5), replace=False)] = True
            P, _ = net.forward(rng.normal(size=5), mask)
            assert (P[~mask] == 0.0).all()
            assert abs(P.sum() - 1.0) <= 1e-9

    def test_shape_and_mask_errors(self):
        net = tiny_net()
        with pytest.raises(ContractError):
            net.forward(np.ones(6), np.ones(4, dtype=bool))
        with pytest.raises(ContractError):
            net.forward(np.ones(5), np.zeros(4, dtype=bool))

    def test_masked_softmax_normalization(self):
        rng = np.random.default_rng(2)
        logits = rng.normal(scale=30.0, size=(50, 9))
        masks = rng.random((50, 9)) < 0.5
        masks[:, 0] = True
        P = masked_softmax(logits, masks)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
        assert (P[~masks] == 0.0).all()


class TestLoss:
    def test_hand_value_onehot(self):
        net = zero_net()
        mask = np.array([True, True, False, False])
        eps = np.array([1.0, 0.0, 0.0, 0.0])
        sample = TrainSample(np.ones(5), mask, eps, -1.0)
        assert math.isclose(net.loss([sample]), 1.0 + math.log(2.0),
                            rel_tol=1e-12)

    def test_perfect_prediction_zero(self):
        net = zero_net()
        mask = np.array([False, True, False, False])
        eps = np.array([0.0, 1.0, 0.0, 0.0])
        assert net.loss([TrainSample(np.ones(5), mask, eps, 0.0)]) == 0.0

    def test_uniform_entropy(self):
        net = zero_net()
        for k in (2, 3, 4):
            mask = np.zeros(4, dtype=bool)
            mask[:k] = True
            eps = mask / k
            loss = net.loss([TrainSample(np.ones(5), mask, eps, 0.0)])
            assert math.isclose(loss, math.log(k), rel_tol=1e-12)

    def test_batch_order_invariance(self):
        net = tiny_net(init_seed=5)
        batch = random_batch(net, 6, seed=3)
        assert math.isclose(net.loss(batch), net.loss(batch[::-1]),
                            rel_tol=1e-12)

    def test_rejects_bad_samples(self):
        net = tiny_net()
        all_masked = TrainSample(np.ones(5), np.zeros(4, dtype=bool),
                                 np.zeros(4), 0.0)
        with pytest.raises(ContractError):
            net.loss([all_masked])
        leaky = TrainSample(np.ones(5), np.array([True, False, True, False]),
                            np.array([0.5, 0.5, 0.0, 0.0]), 0.0)
        with pytest.raises(ContractError):
            net.loss([leaky])
        with pytest.raises(ContractError):
            net.loss([])


class TestGradients:
    def test_finite_differences(self):
        net = tiny_net(init_seed=7)
        batch = random_batch(net, 4, seed=11)
        grads = net.gradients(batch)
        rng = np.random.default_rng(13)
        checked = 0
        while checked < 20:
            name = str(rng.choice(list(net.params)))
            arr = net.params[name]
            idx = tuple(int(rng.integers(s)) for s in arr.shape)
            step = 1e-5
            arr[idx] += step
            up = net.loss(batch)
            arr[idx] -= 2 * step
            down = net.loss(batch)
            arr[idx] += step
            fd = (up - down) / (2 * step)
            rel = abs(grads[name][idx] - fd) / max(abs(fd), 1e-4)
            assert rel < 1e-4, (name, idx, grads[name][idx], fd)
            checked += 1

    def test_zero_loss_gives_zero_gradients(self):
        net = zero_net()
        mask = np.array([False, True, False, False])
        eps = np.array([0.0, 1.0, 0.0, 0.0])
        grads = net.gradients([TrainSample(np.ones(5), mask, eps, 0.0)])
        for arr in grads.values():
            assert np.abs(arr).max() < 1e-12

    def test_duplication_invariance(self):
        net = tiny_net(init_seed=9)
        batch = random_batch(net, 3, seed=17)
        single = net.gradients(batch)
        doubled = net.gradients(batch + batch)
        for name in single:
            np.testing.assert_allclose(doubled[name], single[name], atol=1e-12)


class TestTrainStep:
    def test_zero_learning_rate(self):
        net = tiny_net(init_seed=1)
        before = {k: v.copy() for k, v in net.params.items()}
        net.train_step(random_batch(net, 4, seed=2), 0.0)
        for name, arr in net.params.items():
            assert np.array_equal(arr, before[name])

    def test_single_step_decreases_loss(self):
        net = tiny_net(init_seed=2)
        batch = random_batch(net, 4, seed=5)
        before = net.loss(batch)
        net.train_step(batch, 1e-3)
        assert net.loss(batch) < before

    def test_overfit_one_batch(self):
        net = tiny_net(init_seed=3)
        batch = random_batch(net, 8, seed=8, eps_mode="onehot")
        for _ in range(2000):
            net.train_step(batch, 0.05)
            if net.loss(batch) < 0.01:
                break
        assert net.loss(batch) < 0.01

    def test_divergence_leaves_params_untouched(self):
        net = tiny_net(init_seed=4)
        net.params["w1"][0, 0] = np.nan
        before = {k: v.copy() for k, v in net.params.items()}
        with pytest.raises(DivergenceError):
            net.train_step(random_batch(net, 2, seed=1), 0.1)
        for name, arr in net.params.items():
            assert np.array_equal(arr, before[name], equal_nan=True)

    def test_negative_learning_rate_rejected(self):
        net = tiny_net()
        with pytest.raises(ContractError):
            net.train_step(random_batch(net, 2, seed=1), -0.1)

    def test_determinism(self):
        runs = []
        for _ in range(2):
            net = tiny_net(init_seed=6)
            for step in range(5):
                net.train_step(random_batch(net, 4, seed=step), 0.01,
                               momentum=0.9)
            runs.append(net.params)
        for name in runs[0]:
            assert np.array_equal(runs[0][name], runs[1][name])


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        net = tiny_net(init_seed=12)
        net.train_step(random_batch(net, 4, seed=3), 0.05)
        path = str(tmp_path / "net.json")
        net.save_checkpoint(path)
        clone = PolicyValueNet.load_checkpoint(path, expect_task="puzzle8")
        for name, arr in net.params.items():
            assert np.array_equal(arr, clone.params[name])

    def test_version_mismatch(self, tmp_path):
        import json
        net = tiny_net()
        path = str(tmp_path / "net.json")
        net.save_checkpoint(path)
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        payload["format_version"] = 99
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)
        with pytest.raises(UnsupportedVersionError):
            PolicyValueNet.load_checkpoint(path)

    def test_task_mismatch(self, tmp_path):
        net = PolicyValueNet("cube", 144, 9)
        path = str(tmp_path / "cube.json")
        net.save_checkpoint(path)
        with pytest.raises(TaskMismatchError):
            PolicyValueNet.load_checkpoint(path, expect_task="puzzle8")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(Exception):
            PolicyValueNet.load_checkpoint(str(path))


def test_parameter_count_game24():
    net = PolicyValueNet("game24", 12, 36)
    assert net.num_params() == 44_197
