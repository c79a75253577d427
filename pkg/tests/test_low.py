import numpy as np
import pytest

from prefhrl import nets
from prefhrl.envs import FourRooms, PointPush, goal_reward
from prefhrl.lowlevel import (
    ACPolicy,
    DualPolicy,
    ExplorationSchedule,
    QPolicy,
    act_base,
    act_explore,
    init_dual_policy,
    init_low_optimizers,
    q_td_loss,
    update_low,
)
from prefhrl.replay import GoalTransition, LowBuffer
from prefhrl.rnd import RndPair, RunningStats, init_rnd, rnd_reward
from helpers import (
    GridWorld,
    finite_difference_grad,
    gridworld_value_iteration,
    relative_grad_error,
)


def fill_buffer(env, dp, steps=600, seed=0):
    buf = LowBuffer(10_000)
    rng = np.random.default_rng(seed)
    episode = 0
    while len(buf) < steps:
        s, g_env = env.reset(seed=int(rng.integers(0, 2**31 - 1)))
        g_sub = rng.uniform(-0.4, 0.4, size=2)
        for t in range(env.spec.horizon):
            a = act_explore(dp, s, g_sub, rng=rng, epsilon=1.0, action_noise=0.3)
            res = env.step(a)
            buf.push(GoalTransition(
                s=s, a=np.asarray(a, dtype=np.float64),
                r=goal_reward(res.achieved_goal, g_sub, env.spec.epsilon),
                s_next=res.next_state, achieved_next=res.achieved_goal,
                g_sub=g_sub, episode_id=episode, step_index=t,
            ))
            s = res.next_state
            if res.done:
                break
        episode += 1
    return buf


class TestActions:
    def test_discrete_action_range(self):
        env = FourRooms()
        dp = init_dual_policy(env.spec, 16, 1, seed=0)
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = act_explore(dp, np.zeros(2), np.zeros(2), rng=rng, epsilon=0.5)
            assert 0 <= a < 9

    def test_continuous_action_bounds(self):
        env = PointPush()
        dp = init_dual_policy(env.spec, 16, 1, seed=0)
        rng = np.random.default_rng(1)
        for _ in range(200):
            a = act_explore(dp, np.zeros(4), np.zeros(2), rng=rng, action_noise=0.5)
            assert np.all(np.abs(a) <= 1.0)

    def test_greedy_modes_deterministic(self):
        env = PointPush()
        dp = init_dual_policy(env.spec, 16, 1, seed=0)
        s, g = np.ones(4) * 0.1, np.zeros(2)
        assert np.array_equal(act_explore(dp, s, g, greedy=True),
                              act_explore(dp, s, g, greedy=True))
        assert np.array_equal(act_base(dp, s, g), act_base(dp, s, g))

    def test_base_and_explore_policies_differ(self):
        env = FourRooms()
        dp = init_dual_policy(env.spec, 32, 2, seed=3)
        rng = np.random.default_rng(2)
        differs = False
        for _ in range(50):
            s = rng.uniform(-0.5, 0.5, 2)
            g = rng.uniform(-0.5, 0.5, 2)
            if act_base(dp, s, g) != act_explore(dp, s, g, greedy=True):
                differs = True
                break
        assert differs

    def test_epsilon_schedule(self):
        sched = ExplorationSchedule(0.2, 0.05, decay_episodes=100)
        assert sched.epsilon(0) == pytest.approx(0.2)
        assert sched.epsilon(50) == pytest.approx(0.125)
        assert sched.epsilon(100) == pytest.approx(0.05)
        assert sched.epsilon(5000) == pytest.approx(0.05)


class TestUpdateLow:
    def _setup(self, decoupled=True):
        env = FourRooms()
        dp = init_dual_policy(env.spec, 16, 1, seed=1, decoupled=decoupled)
        pair = init_rnd(2, 16, 1, 8, seed=0)
        opts = init_low_optimizers(dp, pair, 1e-3, 1e-3, 3e-4)
        stats = RunningStats()
        stats.update(np.random.default_rng(0).gamma(2.0, 1.0, size=50))
        buf = fill_buffer(env, dp, steps=300)
        return env, dp, pair, opts, stats, buf

    def test_insufficient_data_rejected(self):
        env, dp, pair, opts, stats, buf = self._setup()
        with pytest.raises(ValueError):
            update_low(dp, pair, stats, buf, 100_000, opts, 0.95, 0.005, 0.8,
                       env.spec.epsilon, 1.0, np.random.default_rng(0))

    def test_base_rewards_are_sparse(self):
        env, dp, pair, opts, stats, buf = self._setup()
        _, _, _, _, base_r, _ = update_low(
            dp, pair, stats, buf, 128, opts, 0.95, 0.005, 0.8,
            env.spec.epsilon, 1.0, np.random.default_rng(1))
        assert np.isin(base_r, (0.0, 1.0)).all()

    def test_explore_rewards_are_base_plus_bonus(self):
        env, dp, pair, opts, stats, buf = self._setup()
        dp2, pair2, _, _, base_r, explore_r = update_low(
            dp, pair, stats, buf, 128, opts, 0.95, 0.005, 0.8,
            env.spec.epsilon, 1.0, np.random.default_rng(2))
        bonus = explore_r - base_r
        assert np.all(np.isfinite(bonus))
        assert not np.allclose(bonus, 0.0)  # stats are warm, predictor imperfect

    def test_zero_error_predictor_gives_constant_shift(self):
        env, dp, _, opts, stats, buf = self._setup()
        pair = init_rnd(2, 16, 1, 8, seed=0)
        cloned = RndPair(pair.target, pair.target.with_params(pair.target.params.copy()))
        opts.rnd = nets.adam_init(cloned.predictor, 3e-4)
        _, pair_after, _, _, base_r, explore_r = update_low(
            dp, cloned, stats, buf, 128, opts, 0.95, 0.005, 0.8,
            env.spec.epsilon, 1.0, np.random.default_rng(3))
        constant = (0.0 - stats.mean) / max(stats.std, 1e-8)
        assert np.allclose(explore_r - base_r, constant)
        # zero distillation gradient: the predictor stayed equal to the target
        assert np.array_equal(pair_after.predictor.params, pair_after.target.params)

    def test_coupled_mode_shares_one_policy(self):
        env, dp, pair, opts, stats, buf = self._setup(decoupled=False)
        assert dp.base is dp.explore
        dp2, _, _, losses, base_r, explore_r = update_low(
            dp, pair, stats, buf, 128, opts, 0.95, 0.005, 0.8,
            env.spec.epsilon, 1.0, np.random.default_rng(4))
        assert dp2.base is dp2.explore
        assert np.array_equal(base_r, explore_r - (explore_r - base_r))
        assert losses["low_base_loss"] == losses["low_explore_loss"]


class TestTdGradients:
    def test_q_td_loss_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        q = nets.init_mlp([4, 12, 9], seed=6)
        x = rng.normal(size=(8, 4))
        actions = rng.integers(0, 9, size=8)
        y = rng.normal(size=8)
        _, analytic = q_td_loss(q, (x, actions, y))
        numeric = finite_difference_grad(
            lambda p: q_td_loss(q.with_params(p), (x, actions, y))[0], q.params)
        assert relative_grad_error(analytic, numeric) < 1e-6


class TestGridworldOracle:
    def test_base_policy_matches_value_iteration(self):
        gamma = 0.95
        env = GridWorld(goal_cell=(4, 4))
        dp = init_dual_policy(env.spec, 64, 2, seed=7)
        pair = init_rnd(2, 32, 1, 16, seed=7)
        opts = init_low_optimizers(dp, pair, 1e-3, 1e-3, 3e-4)
        stats = RunningStats()
        buf = LowBuffer(50_000)
        rng = np.random.default_rng(8)
        goal = env._scale(env.goal_cell)

        for episode in range(120):
            s, _ = env.reset(seed=int(rng.integers(0, 2**31 - 1)))
            for t in range(env.spec.horizon):
                eps = max(1.0 - episode / 60, 0.1)
                a = act_explore(dp, s, goal, rng=rng, epsilon=eps)
                res = env.step(a)
                buf.push(GoalTransition(
                    s=s, a=np.asarray(float(a)), step_index=t, episode_id=episode,
                    r=goal_reward(res.achieved_goal, goal, env.spec.epsilon),
                    s_next=res.next_state, achieved_next=res.achieved_goal,
                    g_sub=goal,
                ))
                stats.update(rnd_reward(pair, res.next_state))
                s = res.next_state
                if res.done:
                    break
            if len(buf) >= 256:
                for _ in range(8):
                    dp, pair, opts, _, _, _ = update_low(
                        dp, pair, stats, buf, 256, opts, gamma, 0.005, 0.8,
                        env.spec.epsilon, 1.0, rng)

        optimal = gridworld_value_iteration((4, 4), gamma)
        worst = 0.0
        for x in range(5):
            for y in range(5):
                probe = env.clone()
                probe.reset(seed=0)
                probe._cell = np.array([x, y])
                probe._done = False
                probe._steps = 0
                s = probe._scale(probe._cell)
                empirical = 0.0
                for t in range(probe.spec.horizon):
                    res = probe.step(act_base(dp, s, goal))
                    r = goal_reward(res.achieved_goal, goal, probe.spec.epsilon)
                    if r == 1.0:
                        empirical = gamma**t
                        break
                    s = res.next_state
                    if res.done:
                        break
                worst = max(worst, abs(empirical - optimal[x, y]))
        assert worst <= 0.05
