import numpy as np
import pytest

from prefhrl import nets
from prefhrl.rnd import (
    RndPair,
    RunningStats,
    init_rnd,
    normalize_intrinsic,
    rnd_reward,
    train_rnd,
)


@pytest.fixture
def pair():
    return init_rnd(state_dim=2, hidden_size=16, hidden_layers=2,
                    represent_size=8, seed=0)


def test_reward_nonnegative_and_pointwise(pair):
    rng = np.random.default_rng(0)
    states = rng.normal(size=(50, 2))
    rewards = rnd_reward(pair, states)
    assert np.all(rewards >= 0)
    # pointwise: batch composition does not matter
    for i in (0, 17, 49):
        assert rnd_reward(pair, states[i]) == pytest.approx(rewards[i])


def test_identical_networks_give_zero_reward_and_loss(pair):
    cloned = RndPair(pair.target, pair.target.with_params(pair.target.params.copy()))
    states = np.random.default_rng(1).normal(size=(10, 2))
    assert np.allclose(rnd_reward(cloned, states), 0.0)
    opt = nets.adam_init(cloned.predictor, 1e-3)
    cloned2, _, loss = train_rnd(cloned, states, opt)
    assert loss == 0.0
    assert np.array_equal(cloned2.predictor.params, cloned.predictor.params)


def test_empty_batch_rejected(pair):
    opt = nets.adam_init(pair.predictor, 1e-3)
    with pytest.raises(ValueError):
        train_rnd(pair, np.zeros((0, 2)), opt)


def test_target_frozen_and_loss_decreases(pair):
    states = np.random.default_rng(2).uniform(-0.5, 0.5, size=(64, 2))
    opt = nets.adam_init(pair.predictor, 1e-3)
    target_before = pair.target.params.copy()
    losses = []
    for _ in range(100):
        pair, opt, loss = train_rnd(pair, states, opt)
        losses.append(loss)
    assert np.array_equal(pair.target.params, target_before)
    drops = sum(b < a for a, b in zip(losses, losses[1:]))
    assert drops >= 0.95 * (len(losses) - 1)
    assert losses[-1] < losses[0] * 0.5


def test_trained_region_scores_lower_than_held_out(pair):
    rng = np.random.default_rng(3)
    near = np.array([0.1, 0.1]) + 0.02 * rng.normal(size=(128, 2))
    opt = nets.adam_init(pair.predictor, 1e-3)
    for _ in range(300):
        pair, opt, _ = train_rnd(pair, near, opt)
    far = np.array([-2.5, 3.0])
    assert rnd_reward(pair, np.array([0.1, 0.1])) < rnd_reward(pair, far)


class TestRunningStats:
    def test_cold_start_returns_zero(self):
        stats = RunningStats()
        assert normalize_intrinsic(stats, 3.0) == 0.0
        stats.update(1.0)
        assert normalize_intrinsic(stats, 3.0) == 0.0

    def test_value_at_mean_is_zero(self):
        stats = RunningStats()
        stats.update([1.0, 2.0, 3.0])
        assert normalize_intrinsic(stats, stats.mean) == pytest.approx(0.0)

    def test_monotone_in_reward(self):
        stats = RunningStats()
        stats.update(np.random.default_rng(0).normal(size=100))
        values = [normalize_intrinsic(stats, r) for r in np.linspace(-3, 3, 20)]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_long_window_is_standardized(self):
        rng = np.random.default_rng(4)
        draws = rng.gamma(2.0, 1.5, size=5000)
        stats = RunningStats()
        stats.update(draws)
        z = normalize_intrinsic(stats, draws)
        assert abs(float(np.mean(z))) < 0.1
        assert abs(float(np.std(z)) - 1.0) < 0.2

    def test_mean_order_insensitive(self):
        rng = np.random.default_rng(5)
        draws = rng.normal(size=500)
        a, b = RunningStats(), RunningStats()
        a.update(draws)
        b.update(draws[::-1])
        assert a.mean == pytest.approx(b.mean, abs=1e-10)
        assert a.std == pytest.approx(b.std, abs=1e-10)
