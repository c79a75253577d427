"""High-level subgoal policy under a learned distance constraint.

A tanh-squashed diagonal-Gaussian actor proposes subgoals inside the goal
box; a single critic with a soft-updated target scores them.  The actor
objective subtracts alpha * max(d(subgoal, achieved) - k, 0), differentiating
through the distance model at the sampled subgoal, so the constraint stays
active even where the critic is poorly fit.  The critic itself regresses the
environment-side reward only.  alpha follows a projected dual ascent on the
mean constraint violation, and k moves on subgoal success-rate thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import nets
from .envs import goal_reward
from .nets import AdamState, Mlp

LOG_STD_MIN = -3.0
LOG_STD_MAX = 2.0
_ATANH_GUARD = 1e-9
_JACOBIAN_EPS = 1e-12
# Keep pre-squash means inside the invertible region of tanh; beyond this the
# squash gradient vanishes and the actor cannot recover from the box edge.
MEAN_SAT_BOUND = 2.0
MEAN_SAT_WEIGHT = 1.0


def _squash_log_std(raw: np.ndarray) -> np.ndarray:
    """Smooth bounded log-std head; a hard clip would trap the variance once
    the raw head drifts past a bound (zero gradient, no recovery)."""
    return LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (np.tanh(raw) + 1.0)


def _squash_log_std_grad(raw: np.ndarray) -> np.ndarray:
    return 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - np.tanh(raw) ** 2)


@dataclass(frozen=True)
class SubgoalPolicy:
    """Actor over the goal box conditioned on (state, episode goal), plus critic pair."""

    actor: Mlp  # (s, g_env) -> [mean, log_std] per goal dimension
    critic: Mlp  # (s, g_env, g_sub) -> value
    critic_target: Mlp
    goal_low: np.ndarray
    goal_high: np.ndarray

    @property
    def goal_dim(self) -> int:
        return self.goal_low.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.goal_low + self.goal_high)

    @property
    def half(self) -> np.ndarray:
        return 0.5 * (self.goal_high - self.goal_low)


def init_subgoal_policy(state_dim: int, goal_dim: int, hidden_size: int,
                        hidden_layers: int, goal_low, goal_high, seed: int) -> SubgoalPolicy:
    actor = nets.init_mlp(
        nets.hidden_stack(state_dim + goal_dim, hidden_size, hidden_layers, 2 * goal_dim),
        seed=seed * 3 + 1,
    )
    # Zero output head: subgoals start at the box center with unit pre-squash
    # spread instead of wherever random init happens to saturate.
    params = actor.params.copy()
    params[-(hidden_size * 2 * goal_dim + 2 * goal_dim):] = 0.0
    actor = actor.with_params(params)
    critic = nets.init_mlp(
        nets.hidden_stack(state_dim + 2 * goal_dim, hidden_size, hidden_layers, 1),
        seed=seed * 3 + 2,
    )
    return SubgoalPolicy(
        actor=actor,
        critic=critic,
        critic_target=critic.with_params(critic.params.copy()),
        goal_low=np.asarray(goal_low, dtype=np.float64),
        goal_high=np.asarray(goal_high, dtype=np.float64),
    )


def _actor_heads(policy: SubgoalPolicy, x: np.ndarray):
    out = nets.forward(policy.actor, x)
    m = policy.goal_dim
    mean = out[..., :m]
    log_std = _squash_log_std(out[..., m:])
    return mean, log_std


def _squash(policy: SubgoalPolicy, u: np.ndarray) -> np.ndarray:
    return policy.center + policy.half * np.tanh(u)


def select_subgoal(policy: SubgoalPolicy, s: np.ndarray, g_env: np.ndarray,
                   mode: str = "stochastic", rng: np.random.Generator | None = None) -> np.ndarray:
    """Propose a subgoal inside the goal box; greedy mode returns the squashed mean."""
    x = np.concatenate([np.asarray(s, dtype=np.float64), np.asarray(g_env, dtype=np.float64)])
    mean, log_std = _actor_heads(policy, x)
    if mode == "greedy":
        return _squash(policy, mean)
    if mode != "stochastic":
        raise ValueError(f"unknown subgoal selection mode {mode!r}")
    if rng is None:
        raise ValueError("stochastic subgoal selection needs an rng")
    u = mean + np.exp(log_std) * rng.standard_normal(policy.goal_dim)
    return _squash(policy, u)


def sample_subgoals(policy: SubgoalPolicy, x: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Batch squashed samples for injected standard-normal noise (testing hook)."""
    mean, log_std = _actor_heads(policy, x)
    return _squash(policy, mean + np.exp(log_std) * noise)


def log_prob_batch(policy: SubgoalPolicy, s: np.ndarray, g_env: np.ndarray,
                   g_sub: np.ndarray) -> np.ndarray:
    """Row-wise log-density of the squashed Gaussian actor at given subgoals."""
    x = np.concatenate([np.atleast_2d(s), np.atleast_2d(g_env)], axis=1)
    mean, log_std = _actor_heads(policy, x)
    t = (np.atleast_2d(g_sub) - policy.center) / policy.half
    t = np.clip(t, -1.0 + _ATANH_GUARD, 1.0 - _ATANH_GUARD)
    u = np.arctanh(t)
    std = np.exp(log_std)
    gauss = -0.5 * ((u - mean) / std) ** 2 - log_std - 0.5 * np.log(2.0 * np.pi)
    jacobian = np.log(policy.half * (1.0 - t**2) + _JACOBIAN_EPS)
    return np.sum(gauss - jacobian, axis=1)


def log_prob(policy: SubgoalPolicy, s: np.ndarray, g_env: np.ndarray,
             g_sub: np.ndarray) -> float:
    """Log-density of the squashed Gaussian actor at one subgoal."""
    return float(log_prob_batch(policy, s[None], g_env[None],
                                np.asarray(g_sub, dtype=np.float64)[None])[0])


def penalty_values(d: np.ndarray, k: float) -> np.ndarray:
    """Constraint violation max(d - k, 0); zero (with zero subgradient) when d <= k."""
    if k < 0:
        raise ValueError("constraint radius k must be nonnegative")
    return np.maximum(np.asarray(d, dtype=np.float64) - k, 0.0)


def penalty(distance_fn: Callable, g_sub, g_ach, k: float):
    """Penalty evaluated through a distance callable d(g_sub, g_ach) -> [0, 1]."""
    return penalty_values(distance_fn(g_sub, g_ach), k)


def high_reward(reward_fn: Callable, policy: SubgoalPolicy, s, g_sub, g_env,
                beta: float) -> float:
    """Decision-time reward: learned preference reward plus an entropy bonus.

    `reward_fn(s, g_sub, g_env)` maps row-aligned arrays to rewards in [0, 1].
    """
    r_hf = float(np.asarray(reward_fn(
        np.asarray(s)[None], np.asarray(g_sub)[None], np.asarray(g_env)[None]
    )).reshape(-1)[0])
    logp = log_prob(policy, s, g_env, g_sub)
    if not np.isfinite(logp):
        raise FloatingPointError("non-finite subgoal log-density")
    return r_hf - beta * logp


def critic_loss_and_grad(critic: Mlp, batch) -> tuple[float, np.ndarray]:
    """MSE against fixed targets: batch = (inputs, targets)."""
    x, y = batch
    q, cache = nets.forward_cached(critic, x)
    diff = q[:, 0] - y
    loss = float(np.mean(diff**2))
    grad, _ = nets.backward(critic, cache, (2.0 * diff / x.shape[0])[:, None])
    return loss, grad


def actor_loss_and_grad(
    actor: Mlp,
    policy: SubgoalPolicy,
    d_model: Mlp | None,
    s: np.ndarray,
    g_env: np.ndarray,
    g_ach: np.ndarray,
    alpha: float,
    k: float,
    noise: np.ndarray,
):
    """Loss -mean[Q(s, g_env, g) - alpha * max(d(g, g_ach) - k, 0)] and its actor gradient.

    `noise` holds the fixed standard-normal draws of the reparameterized
    subgoals, so the loss is a deterministic, finite-difference-checkable
    function of the actor parameters.  Returns (loss, grad, mean_penalty).
    """
    from .distance import predict_distance  # local import to avoid a cycle

    batch = s.shape[0]
    m = policy.goal_dim
    x = np.concatenate([s, g_env], axis=1)
    out, actor_cache = nets.forward_cached(actor, x)
    mean = out[:, :m]
    raw_ls = out[:, m:]
    log_std = _squash_log_std(raw_ls)
    std = np.exp(log_std)
    u = mean + std * noise
    t = np.tanh(u)
    g = policy.center + policy.half * t

    critic_in = np.concatenate([s, g_env, g], axis=1)
    q, critic_cache = nets.forward_cached(policy.critic, critic_in)
    _, d_critic_in = nets.backward(policy.critic, critic_cache, np.ones((batch, 1)))
    dq_dg = d_critic_in[:, -m:]

    dl_dg = -dq_dg / batch
    mean_pen = 0.0
    if d_model is not None and alpha != 0.0:
        d_in = np.concatenate([g, g_ach], axis=1)
        d_out, d_cache = nets.forward_cached(d_model, d_in)
        d_vals = d_out[:, 0]
        pen = penalty_values(d_vals, k)
        mean_pen = float(np.mean(pen))
        active = (d_vals > k).astype(np.float64)
        _, dd_din = nets.backward(d_model, d_cache, np.ones((batch, 1)))
        dd_dg = dd_din[:, :m]
        dl_dg = dl_dg + (alpha / batch) * active[:, None] * dd_dg
        loss = -float(np.mean(q[:, 0] - alpha * pen))
    else:
        loss = -float(np.mean(q[:, 0]))

    du = dl_dg * policy.half * (1.0 - t**2)
    d_mean = du
    # Saturation guard: penalize pre-squash means that leave the invertible
    # tanh region, where the squash gradient would otherwise vanish.
    overshoot = np.maximum(np.abs(mean) - MEAN_SAT_BOUND, 0.0)
    loss += MEAN_SAT_WEIGHT * float(np.mean(np.sum(overshoot**2, axis=1)))
    d_mean = d_mean + (2.0 * MEAN_SAT_WEIGHT / batch) * overshoot * np.sign(mean)
    d_raw_ls = du * std * noise * _squash_log_std_grad(raw_ls)
    d_head = np.concatenate([d_mean, d_raw_ls], axis=1)
    grad, _ = nets.backward(actor, actor_cache, d_head)
    return loss, grad, mean_pen


def update_high_policy(
    policy: SubgoalPolicy,
    batch,
    alpha: float,
    k: float,
    d_model: Mlp | None,
    actor_opt: AdamState,
    critic_opt: AdamState,
    gamma: float,
    tau: float,
    rng: np.random.Generator,
):
    """One critic regression step, one penalized actor ascent step, one target blend.

    The constraint enters twice.  The critic regresses the penalized reward
    r_hi - alpha * max(d - k, 0) evaluated on the stored decisions, so
    infeasible subgoals are devalued even where the distance head saturates
    and its input gradient vanishes.  The actor additionally differentiates
    the penalty through the distance model at its own sampled subgoal, which
    keeps the constraint active away from the data.  The critic target
    bootstraps with a fresh stochastic subgoal at the segment-end state and
    masks terminal segments.
    """
    from .distance import predict_distance  # local import to avoid a cycle

    batch_size = batch.s_hi.shape[0]
    m = policy.goal_dim

    x_next = np.concatenate([batch.s_end, batch.g_env], axis=1)
    next_noise = rng.standard_normal((batch_size, m))
    g_next = sample_subgoals(policy, x_next, next_noise)
    q_next = nets.forward(
        policy.critic_target, np.concatenate([x_next, g_next], axis=1)
    )[:, 0]
    reward = batch.r_hi
    if d_model is not None and alpha != 0.0:
        d_stored = predict_distance(d_model, batch.g_sub, batch.achieved_at_issue)
        reward = reward - alpha * penalty_values(d_stored, k)
    y = reward + gamma * (1.0 - batch.done) * q_next

    critic_in = np.concatenate([batch.s_hi, batch.g_env, batch.g_sub], axis=1)
    critic, critic_opt, critic_loss = nets.grad_step(
        policy.critic, critic_loss_and_grad, (critic_in, y), critic_opt
    )
    policy = replace(policy, critic=critic)

    actor_noise = rng.standard_normal((batch_size, m))
    actor_loss, actor_grad, mean_pen = actor_loss_and_grad(
        policy.actor, policy, d_model, batch.s_hi, batch.g_env,
        batch.achieved_at_issue, alpha, k, actor_noise,
    )
    if not np.isfinite(actor_loss):
        raise FloatingPointError("non-finite actor loss")
    actor_opt, actor_params = nets.adam_step(actor_opt, policy.actor.params, actor_grad)
    policy = replace(policy, actor=policy.actor.with_params(actor_params))

    policy = replace(
        policy, critic_target=nets.soft_update(policy.critic_target, policy.critic, tau)
    )
    metrics = {
        "high_critic_loss": critic_loss,
        "high_actor_loss": actor_loss,
        "mean_penalty": mean_pen,
        "mean_r_hi": float(np.mean(batch.r_hi)),
    }
    return policy, actor_opt, critic_opt, metrics


@dataclass(frozen=True)
class DualState:
    """Projected dual variable trading reward against constraint violation."""

    alpha: float = 0.0
    alpha_lr: float = 1e-3

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")


def update_alpha(dual: DualState, distance_values: np.ndarray, k: float) -> DualState:
    """Dual ascent on mean(d - k) without the max(): alpha can relax to zero.

    alpha' = max(0, alpha + alpha_lr * mean(d - k)).
    """
    d = np.asarray(distance_values, dtype=np.float64)
    if d.size == 0:
        raise ValueError("empty batch for the dual update")
    new_alpha = max(0.0, dual.alpha + dual.alpha_lr * float(np.mean(d - k)))
    return replace(dual, alpha=new_alpha)


@dataclass(frozen=True)
class Curriculum:
    """Constraint radius and its success-threshold adjustment rule."""

    k: float = 0.05
    delta_k: float = 0.05
    k_init: float = 0.05
    high_threshold: float = 0.6
    low_threshold: float = 0.3
    k_min: float = 0.05
    k_max: float = 1.0


def adjust_k(curr: Curriculum, success_rate: float) -> Curriculum:
    """Raise k on success_rate >= high threshold, lower below the low one; clamp.

    Pure in (curr, success_rate).
    """
    if not 0.0 <= success_rate <= 1.0:
        raise ValueError("success rate must lie in [0, 1]")
    k = curr.k
    if success_rate >= curr.high_threshold:
        k += curr.delta_k
    elif success_rate < curr.low_threshold:
        k -= curr.delta_k
    return replace(curr, k=min(max(k, curr.k_min), curr.k_max))


def evaluate_subgoal_success(env, policy: SubgoalPolicy, act_base, n_rollouts: int,
                             rng: np.random.Generator,
                             subgoal_mode: str = "stochastic") -> float:
    """Fraction of probe rollouts whose first issued subgoal is reached in time.

    Each rollout resets a clone of `env`, draws a subgoal from the high-level
    policy at the initial state, then lets the greedy base policy pursue it
    until contact, episode end or the horizon.  Subgoals are sampled
    stochastically by default so the rate grades the policy's current subgoal
    distribution instead of re-testing one deterministic point.
    """
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be at least 1")
    successes = 0
    for _ in range(n_rollouts):
        probe = env.clone()
        s, g_env = probe.reset(seed=int(rng.integers(0, 2**31 - 1)))
        g_sub = select_subgoal(policy, s, g_env, mode=subgoal_mode, rng=rng)
        if goal_reward(probe.achieved_goal(s), g_sub, probe.spec.epsilon) == 1.0:
            successes += 1  # trivially satisfied at issue time
            continue
        for _ in range(probe.spec.horizon):
            res = probe.step(act_base(s, g_sub))
            if goal_reward(res.achieved_goal, g_sub, probe.spec.epsilon) == 1.0:
                successes += 1
                break
            s = res.next_state
            if res.done:
                break
    return successes / n_rollouts
