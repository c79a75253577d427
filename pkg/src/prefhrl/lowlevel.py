"""Low-level control with exploration/exploitation decoupling.

Two policies share one replay buffer: an exploration policy acts in the
environment and is trained on sparse contact rewards plus a normalized
novelty bonus, while the base policy is trained on exactly the same relabeled
transitions but on the sparse rewards alone.  Discrete action spaces use
double Q-learning; continuous ones use a deterministic actor with a critic
and target-action smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from . import nets, rnd as rnd_mod
from .envs import Box, Discrete
from .nets import AdamState, Mlp


@dataclass(frozen=True)
class QPolicy:
    """Q-network pair for discrete actions over (state, subgoal) inputs."""

    q: Mlp
    q_target: Mlp


@dataclass(frozen=True)
class ACPolicy:
    """Deterministic actor and critic (with targets) for box actions."""

    actor: Mlp
    actor_target: Mlp
    critic: Mlp
    critic_target: Mlp
    action_scale: float


@dataclass(frozen=True)
class DualPolicy:
    """Exploration policy plus decoupled base policy over one shared buffer."""

    base: Union[QPolicy, ACPolicy]
    explore: Union[QPolicy, ACPolicy]
    decoupled: bool = True  # False collapses both roles onto `base`


@dataclass
class ExplorationSchedule:
    """Linear epsilon decay for discrete envs; fixed Gaussian sigma for boxes."""

    epsilon_start: float = 0.2
    epsilon_final: float = 0.05
    decay_episodes: int = 500
    action_noise: float = 0.1

    def epsilon(self, episode: int) -> float:
        if self.decay_episodes <= 0:
            return self.epsilon_final
        frac = min(max(episode / self.decay_episodes, 0.0), 1.0)
        return self.epsilon_start + frac * (self.epsilon_final - self.epsilon_start)


def _make_q(state_dim, goal_dim, n_actions, hidden_size, hidden_layers, seed) -> QPolicy:
    q = nets.init_mlp(
        nets.hidden_stack(state_dim + goal_dim, hidden_size, hidden_layers, n_actions),
        seed=seed,
    )
    return QPolicy(q, q.with_params(q.params.copy()))


def _make_ac(state_dim, goal_dim, action_dim, action_scale, hidden_size,
             hidden_layers, seed) -> ACPolicy:
    actor = nets.init_mlp(
        nets.hidden_stack(state_dim + goal_dim, hidden_size, hidden_layers, action_dim),
        seed=seed, output_activation="tanh",
    )
    critic = nets.init_mlp(
        nets.hidden_stack(state_dim + goal_dim + action_dim, hidden_size, hidden_layers, 1),
        seed=seed + 1,
    )
    return ACPolicy(
        actor, actor.with_params(actor.params.copy()),
        critic, critic.with_params(critic.params.copy()),
        action_scale,
    )


def init_dual_policy(env_spec, hidden_size: int, hidden_layers: int, seed: int,
                     decoupled: bool = True) -> DualPolicy:
    space = env_spec.action_space
    if isinstance(space, Discrete):
        base = _make_q(env_spec.state_dim, env_spec.goal_dim, space.n,
                       hidden_size, hidden_layers, seed * 5 + 1)
        explore = base if not decoupled else _make_q(
            env_spec.state_dim, env_spec.goal_dim, space.n,
            hidden_size, hidden_layers, seed * 5 + 2)
    elif isinstance(space, Box):
        base = _make_ac(env_spec.state_dim, env_spec.goal_dim, space.dim, space.high,
                        hidden_size, hidden_layers, seed * 5 + 1)
        explore = base if not decoupled else _make_ac(
            env_spec.state_dim, env_spec.goal_dim, space.dim, space.high,
            hidden_size, hidden_layers, seed * 5 + 3)
    else:
        raise TypeError(f"unsupported action space {space!r}")
    return DualPolicy(base=base, explore=explore, decoupled=decoupled)


def _policy_action(policy, s, g_sub, greedy: bool, rng, noise_scale: float, epsilon: float):
    x = np.concatenate([np.asarray(s, dtype=np.float64), np.asarray(g_sub, dtype=np.float64)])
    if isinstance(policy, QPolicy):
        if not greedy and rng is not None and rng.random() < epsilon:
            return int(rng.integers(0, policy.q.out_dim))
        return int(np.argmax(nets.forward(policy.q, x)))
    raw = nets.forward(policy.actor, x)
    if not greedy and rng is not None and noise_scale > 0:
        raw = raw + noise_scale * rng.standard_normal(raw.shape)
    return np.clip(raw, -1.0, 1.0) * policy.action_scale


def act_explore(dp: DualPolicy, s, g_sub, rng: Optional[np.random.Generator] = None,
                greedy: bool = False, epsilon: float = 0.0, action_noise: float = 0.0):
    """Action from the exploration policy; noise applies only off-greedy."""
    return _policy_action(dp.explore, s, g_sub, greedy, rng, action_noise, epsilon)


def act_base(dp: DualPolicy, s, g_sub, rng: Optional[np.random.Generator] = None,
             greedy: bool = True, epsilon: float = 0.0, action_noise: float = 0.0):
    """Action from the base policy (evaluation and subgoal-success probes)."""
    return _policy_action(dp.base, s, g_sub, greedy, rng, action_noise, epsilon)


def q_td_loss(q_net: Mlp, batch) -> tuple[float, np.ndarray]:
    """TD regression on the actions taken: batch = (inputs, action_idx, targets)."""
    x, actions, y = batch
    q_all, cache = nets.forward_cached(q_net, x)
    picked = q_all[np.arange(x.shape[0]), actions]
    diff = picked - y
    loss = float(np.mean(diff**2))
    d_out = np.zeros_like(q_all)
    d_out[np.arange(x.shape[0]), actions] = 2.0 * diff / x.shape[0]
    grad, _ = nets.backward(q_net, cache, d_out)
    return loss, grad


def _update_q(policy: QPolicy, batch_x, batch_a, rewards, batch_x_next, gamma, tau,
              opt: AdamState):
    """Double Q step: online argmax at s', target net evaluates; success is terminal."""
    q_next_online = nets.forward(policy.q, batch_x_next)
    next_actions = np.argmax(q_next_online, axis=1)
    q_next_target = nets.forward(policy.q_target, batch_x_next)
    bootstrap = q_next_target[np.arange(batch_x.shape[0]), next_actions]
    # Contact with the subgoal is absorbing: no bootstrap past a sparse success.
    not_done = 1.0 - (rewards >= 1.0).astype(np.float64)
    y = rewards + gamma * not_done * bootstrap
    q, opt, loss = nets.grad_step(policy.q, q_td_loss, (batch_x, batch_a.astype(int), y), opt)
    policy = QPolicy(q, nets.soft_update(policy.q_target, q, tau))
    return policy, opt, loss


def critic_td_loss(critic: Mlp, batch) -> tuple[float, np.ndarray]:
    x, y = batch
    q, cache = nets.forward_cached(critic, x)
    diff = q[:, 0] - y
    loss = float(np.mean(diff**2))
    grad, _ = nets.backward(critic, cache, (2.0 * diff / x.shape[0])[:, None])
    return loss, grad


def ac_actor_loss(actor: Mlp, batch) -> tuple[float, np.ndarray]:
    """Deterministic policy gradient: minimize -mean Q(s, g, scale * actor(s, g))."""
    x, critic, scale = batch
    a, cache = nets.forward_cached(actor, x)
    critic_in = np.concatenate([x, scale * a], axis=1)
    q, critic_cache = nets.forward_cached(critic, critic_in)
    loss = -float(np.mean(q[:, 0]))
    _, d_in = nets.backward(critic, critic_cache, np.full((x.shape[0], 1), -1.0 / x.shape[0]))
    d_a = d_in[:, -a.shape[1]:] * scale
    grad, _ = nets.backward(actor, cache, d_a)
    return loss, grad


_SMOOTH_SIGMA = 0.2
_SMOOTH_CLIP = 0.5


def _update_ac(policy: ACPolicy, batch_x, batch_a, rewards, batch_x_next, gamma, tau,
               critic_opt: AdamState, actor_opt: AdamState, rng: np.random.Generator):
    n = batch_x.shape[0]
    a_next = nets.forward(policy.actor_target, batch_x_next)
    smoothing = np.clip(_SMOOTH_SIGMA * rng.standard_normal(a_next.shape),
                        -_SMOOTH_CLIP, _SMOOTH_CLIP)
    a_next = np.clip(a_next + smoothing, -1.0, 1.0) * policy.action_scale
    q_next = nets.forward(policy.critic_target,
                          np.concatenate([batch_x_next, a_next], axis=1))[:, 0]
    not_done = 1.0 - (rewards >= 1.0).astype(np.float64)
    y = rewards + gamma * not_done * q_next

    critic_in = np.concatenate([batch_x, batch_a], axis=1)
    critic, critic_opt, critic_loss = nets.grad_step(
        policy.critic, critic_td_loss, (critic_in, y), critic_opt
    )
    policy = replace(policy, critic=critic)

    actor, actor_opt, actor_loss = nets.grad_step(
        policy.actor, ac_actor_loss, (batch_x, policy.critic, policy.action_scale), actor_opt
    )
    policy = replace(
        policy,
        actor=actor,
        actor_target=nets.soft_update(policy.actor_target, actor, tau),
        critic_target=nets.soft_update(policy.critic_target, policy.critic, tau),
    )
    return policy, critic_opt, actor_opt, critic_loss + actor_loss


@dataclass
class LowOptimizers:
    base_critic: AdamState
    base_actor: Optional[AdamState]
    explore_critic: AdamState
    explore_actor: Optional[AdamState]
    rnd: AdamState


def init_low_optimizers(dp: DualPolicy, rnd_pair, critic_lr: float, actor_lr: float,
                        rnd_lr: float) -> LowOptimizers:
    if isinstance(dp.base, QPolicy):
        return LowOptimizers(
            base_critic=nets.adam_init(dp.base.q, critic_lr),
            base_actor=None,
            explore_critic=nets.adam_init(dp.explore.q, critic_lr),
            explore_actor=None,
            rnd=nets.adam_init(rnd_pair.predictor, rnd_lr),
        )
    return LowOptimizers(
        base_critic=nets.adam_init(dp.base.critic, critic_lr),
        base_actor=nets.adam_init(dp.base.actor, actor_lr),
        explore_critic=nets.adam_init(dp.explore.critic, critic_lr),
        explore_actor=nets.adam_init(dp.explore.actor, actor_lr),
        rnd=nets.adam_init(rnd_pair.predictor, rnd_lr),
    )


def update_low(
    dp: DualPolicy,
    rnd_pair,
    rnd_stats,
    buffer,
    batch_size: int,
    opts: LowOptimizers,
    gamma: float,
    tau: float,
    hindsight_ratio: float,
    epsilon: float,
    bonus_scale: float,
    rng: np.random.Generator,
):
    """One decoupled update round on a shared hindsight-relabeled batch.

    Order per round: train the novelty predictor on the batch states, relabel
    goals/rewards in hindsight, update the base policy on the sparse rewards,
    add the normalized novelty bonus, update the exploration policy.  Both
    policies see identical (s, a, s', g') tuples.
    """
    if len(buffer) < batch_size:
        raise ValueError(f"buffer holds {len(buffer)} < batch size {batch_size}")
    # Relabeling rewrites goals and rewards only, so sampling the relabeled
    # batch up front still feeds the original states to the novelty predictor.
    batch = buffer.sample_hindsight(batch_size, hindsight_ratio, epsilon, rng)
    rnd_pair, opts.rnd, rnd_loss = rnd_mod.train_rnd(rnd_pair, batch.s, opts.rnd)

    x = np.concatenate([batch.s, batch.g_sub], axis=1)
    x_next = np.concatenate([batch.s_next, batch.g_sub], axis=1)

    base_rewards = batch.r.copy()
    if dp.decoupled:
        assert np.isin(base_rewards, (0.0, 1.0)).all(), \
            "base policy must never see shaped rewards"

    bonus = bonus_scale * rnd_mod.normalize_intrinsic(
        rnd_stats, rnd_mod.rnd_reward(rnd_pair, batch.s_next)
    )
    explore_rewards = base_rewards + bonus

    losses = {"rnd_loss": rnd_loss}
    if isinstance(dp.base, QPolicy):
        if dp.decoupled:
            base, opts.base_critic, base_loss = _update_q(
                dp.base, x, batch.a, base_rewards, x_next, gamma, tau, opts.base_critic)
            explore, opts.explore_critic, explore_loss = _update_q(
                dp.explore, x, batch.a, explore_rewards, x_next, gamma, tau,
                opts.explore_critic)
        else:
            base, opts.base_critic, base_loss = _update_q(
                dp.base, x, batch.a, explore_rewards, x_next, gamma, tau, opts.base_critic)
            explore, explore_loss = base, base_loss
    else:
        if dp.decoupled:
            base, opts.base_critic, opts.base_actor, base_loss = _update_ac(
                dp.base, x, batch.a, base_rewards, x_next, gamma, tau,
                opts.base_critic, opts.base_actor, rng)
            explore, opts.explore_critic, opts.explore_actor, explore_loss = _update_ac(
                dp.explore, x, batch.a, explore_rewards, x_next, gamma, tau,
                opts.explore_critic, opts.explore_actor, rng)
        else:
            base, opts.base_critic, opts.base_actor, base_loss = _update_ac(
                dp.base, x, batch.a, explore_rewards, x_next, gamma, tau,
                opts.base_critic, opts.base_actor, rng)
            explore, explore_loss = base, base_loss

    dp = replace(dp, base=base, explore=explore)
    losses.update(low_base_loss=base_loss, low_explore_loss=explore_loss)
    return dp, rnd_pair, opts, losses, base_rewards, explore_rewards
