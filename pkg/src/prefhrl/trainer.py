"""Training orchestrator: episode loop, cadenced labeling, curriculum and artifacts.

Each episode interleaves subgoal segments (the high level issues a subgoal,
the exploration policy pursues it until contact or episode end) with one
round of high-level and low-level updates.  Every `query_frequency` episodes
the preference pipeline runs: drain/collect labels, retrain the reward model,
rewrite stored high-level rewards, refresh the distance model, probe subgoal
success and adjust the constraint radius.  All randomness flows through one
seeded generator, so runs with the scripted labeler are reproducible row for
row, and checkpoints capture enough state to resume mid-run.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import checkpoint as ckpt
from . import distance as dist_mod
from . import highlevel as hi
from . import lowlevel as lo
from . import nets
from . import prefs
from . import rnd as rnd_mod
from .config import TrainConfig
from .envs import goal_reward, make_env
from .replay import GoalTransition, HighBuffer, HighTransition, LowBuffer

METRICS_COLUMNS = (
    "episode", "success", "subgoal_success_rate", "k", "alpha",
    "mean_penalty", "mean_r_hi", "high_actor_loss", "high_critic_loss",
    "low_base_loss", "low_explore_loss", "rnd_loss",
    "reward_model_loss", "distance_loss", "labels_total", "eval_success",
)


@dataclass
class MetricsRow:
    episode: int
    success: float
    subgoal_success_rate: float
    k: float
    alpha: float
    mean_penalty: str
    mean_r_hi: str
    high_actor_loss: str
    high_critic_loss: str
    low_base_loss: str
    low_explore_loss: str
    rnd_loss: str
    reward_model_loss: str
    distance_loss: str
    labels_total: int
    eval_success: str
    wall_clock_s: float = 0.0  # kept in memory; excluded from the CSV for reproducibility


@dataclass
class RunMetrics:
    rows: list = field(default_factory=list)
    adjustment_events: list = field(default_factory=list)  # (episode, rate, k_before, k_after)
    first_full_success_episode: Optional[int] = None

    def append(self, row: MetricsRow):
        self.rows.append(row)

    def to_csv(self, path) -> None:
        lines = [",".join(METRICS_COLUMNS)]
        for row in self.rows:
            values = [getattr(row, col) for col in METRICS_COLUMNS]
            lines.append(",".join(_csv_cell(v) for v in values))
        Path(path).write_text("\n".join(lines) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


class Trainer:
    """Owns every model, buffer and counter of one training run."""

    def __init__(self, cfg: TrainConfig, bridge=None):
        cfg.validate()
        self.cfg = cfg
        self.bridge = bridge
        self.rng = np.random.default_rng(cfg.seed)
        self.env = make_env(cfg.env)
        spec = self.env.spec

        self.high = hi.init_subgoal_policy(
            spec.state_dim, spec.goal_dim, cfg.high_hidden_size,
            cfg.high_hidden_layers, spec.goal_low, spec.goal_high, cfg.seed,
        )
        self.high_actor_opt = nets.adam_init(self.high.actor, cfg.high_actor_lr)
        self.high_critic_opt = nets.adam_init(self.high.critic, cfg.high_critic_lr)

        self.dual_policy = lo.init_dual_policy(
            spec, cfg.low_hidden_size, cfg.low_hidden_layers, cfg.seed,
            decoupled=not cfg.no_eed,
        )
        self.rnd_pair = rnd_mod.init_rnd(
            spec.state_dim, cfg.rnd_hidden_size, cfg.rnd_hidden_layers,
            cfg.rnd_represent_size, cfg.seed,
        )
        self.low_opts = lo.init_low_optimizers(
            self.dual_policy, self.rnd_pair, cfg.low_critic_lr, cfg.low_actor_lr,
            cfg.rnd_lr,
        )
        self.rnd_stats = rnd_mod.RunningStats()

        self.reward_model = prefs.init_reward_model(
            spec.state_dim, spec.goal_dim, cfg.reward_hidden_size,
            cfg.reward_hidden_layers, cfg.seed + 11,
        )
        self.reward_opt = nets.adam_init(self.reward_model, cfg.reward_lr)
        self.reward_model_trained = False

        self.distance_model = dist_mod.init_distance_model(
            spec.goal_dim, cfg.distance_hidden_size, cfg.distance_hidden_layers,
            cfg.seed + 13,
        )
        self.distance_opt = nets.adam_init(self.distance_model, cfg.distance_lr)

        self.low_buffer = LowBuffer(cfg.low_buffer_size)
        self.high_buffer = HighBuffer(cfg.high_buffer_size)
        self.pref_buffer = prefs.PreferenceBuffer(cfg.reward_buffer_size)
        self.pair_buffer = dist_mod.DistancePairBuffer(cfg.distance_buffer_size, spec.goal_dim)

        self.dual = hi.DualState(alpha=0.0 if cfg.no_ddc else cfg.alpha_init,
                                 alpha_lr=cfg.alpha_lr)
        self.curriculum = hi.Curriculum(
            k=cfg.k_init, delta_k=cfg.delta_k, k_init=cfg.k_init,
            high_threshold=cfg.success_high_threshold,
            low_threshold=cfg.success_low_threshold,
            k_min=cfg.k_min, k_max=cfg.k_max,
        )
        self.schedule = lo.ExplorationSchedule(
            cfg.epsilon_start, cfg.epsilon_final, cfg.epsilon_decay_episodes,
            cfg.action_noise,
        )
        self.labeler = self._make_labeler()

        self.episode = 0
        self.labels_total = 0
        self.subgoal_success_rate = 0.0
        self.metrics = RunMetrics()

    # ------------------------------------------------------------------ setup

    def _make_labeler(self):
        cfg = self.cfg
        if cfg.labeler == "oracle":
            return prefs.OracleLabeler(cfg.env)
        if self.bridge is None:
            return None  # evaluation-only use; run() will refuse to label
        return prefs.HumanLabeler(
            self.bridge, cfg.env, timeout_s=cfg.label_timeout_s,
            fallback=(cfg.labeler == "fallback"),
        )

    def _reward_fn(self, s, g_sub, g_env):
        return prefs.reward_value(self.reward_model, s, g_sub, g_env)

    def _rewrite_high_rewards(self) -> int:
        """Refresh stored decisions: fresh reward-model value, preserved bonus.

        The stored r_hi is r_hf - beta * log pi(sample); the log-density part
        belongs to the behavior policy that drew the subgoal, so only the
        reward-model part goes stale.  Rewriting with the bare model instead
        would strip the exploration bonus and re-open the trivial-subgoal
        shortcut (near-duplicate subgoals farming reward every segment).
        """
        bonuses = self.high_buffer.used_column("entropy_bonus")
        return self.high_buffer.rewrite_rewards(
            lambda s, g_sub, g_env:
                prefs.reward_value(self.reward_model, s, g_sub, g_env) + bonuses
        )

    def _distance_fn(self, g_a, g_b):
        return dist_mod.predict_distance(self.distance_model, g_a, g_b)

    def _act_base_greedy(self, s, g_sub):
        return lo.act_base(self.dual_policy, s, g_sub, greedy=True)

    # ---------------------------------------------------------------- episode

    def _rollout_episode(self) -> float:
        """Collect one training episode; returns 1.0 if the env goal was reached."""
        cfg = self.cfg
        env = self.env
        eps_greedy = self.schedule.epsilon(self.episode)
        s, g_env = env.reset(seed=int(self.rng.integers(0, 2**31 - 1)))
        step_idx = 0
        reached_env_goal = 0.0
        done = False
        while not done:
            g_sub = hi.select_subgoal(self.high, s, g_env, "stochastic", self.rng)
            s_hi = s
            achieved_at_issue = env.achieved_goal(s)
            while True:
                a = lo.act_explore(
                    self.dual_policy, s, g_sub, rng=self.rng,
                    epsilon=eps_greedy, action_noise=cfg.action_noise,
                )
                res = env.step(a)
                r_lo = goal_reward(res.achieved_goal, g_sub, env.spec.epsilon)
                self.low_buffer.push(GoalTransition(
                    s=s, a=np.asarray(a, dtype=np.float64), r=r_lo,
                    s_next=res.next_state, achieved_next=res.achieved_goal,
                    g_sub=g_sub, episode_id=self.episode, step_index=step_idx,
                ))
                self.rnd_stats.update(rnd_mod.rnd_reward(self.rnd_pair, res.next_state))
                s = res.next_state
                step_idx += 1
                if r_lo == 1.0 or res.done:
                    done = res.done
                    break
            if goal_reward(env.achieved_goal(s), g_env, env.spec.epsilon) == 1.0:
                reached_env_goal = 1.0
            bonus = -cfg.beta * hi.log_prob(self.high, s_hi, g_env, g_sub)
            r_hf = float(self._reward_fn(s_hi[None], g_sub[None], g_env[None])[0])
            self.high_buffer.push(HighTransition(
                s_hi=s_hi, g_sub=g_sub, s_end=s, g_env=g_env, r_hi=r_hf + bonus,
                achieved_at_issue=achieved_at_issue, episode_id=self.episode,
                done=done, entropy_bonus=bonus,
            ))
        return reached_env_goal

    # ---------------------------------------------------------------- updates

    def _train_high(self):
        cfg = self.cfg
        if len(self.high_buffer) < cfg.high_batch_size:
            return {}
        agg: dict[str, list] = {}
        d_model = None if cfg.no_ddc else self.distance_model
        for _ in range(cfg.high_updates):
            batch = self.high_buffer.sample(cfg.high_batch_size, self.rng)
            self.high, self.high_actor_opt, self.high_critic_opt, metrics = (
                hi.update_high_policy(
                    self.high, batch, self.dual.alpha, self.curriculum.k, d_model,
                    self.high_actor_opt, self.high_critic_opt, cfg.gamma, cfg.tau,
                    self.rng,
                )
            )
            if not cfg.no_ddc:
                # Dual feasibility is judged at fresh policy samples, not at the
                # stored subgoals: alpha has to react when the current actor
                # starts proposing subgoals beyond the constraint radius.
                x = np.concatenate([batch.s_hi, batch.g_env], axis=1)
                noise = self.rng.standard_normal((x.shape[0], self.high.goal_dim))
                fresh = hi.sample_subgoals(self.high, x, noise)
                d_vals = self._distance_fn(fresh, batch.achieved_at_issue)
                self.dual = hi.update_alpha(self.dual, d_vals, self.curriculum.k)
            for name, value in metrics.items():
                agg.setdefault(name, []).append(value)
        return {name: float(np.mean(vals)) for name, vals in agg.items()}

    def _train_low(self):
        cfg = self.cfg
        if len(self.low_buffer) < cfg.low_batch_size:
            return {}
        agg: dict[str, list] = {}
        for _ in range(cfg.low_updates):
            (self.dual_policy, self.rnd_pair, self.low_opts, losses,
             _base_r, _explore_r) = lo.update_low(
                self.dual_policy, self.rnd_pair, self.rnd_stats, self.low_buffer,
                cfg.low_batch_size, self.low_opts, cfg.gamma, cfg.tau,
                cfg.hindsight_ratio, self.env.spec.epsilon, cfg.rnd_bonus_scale,
                self.rng,
            )
            for name, value in losses.items():
                agg.setdefault(name, []).append(value)
        return {name: float(np.mean(vals)) for name, vals in agg.items()}

    # ---------------------------------------------------------------- cadence

    def _preference_round(self) -> Optional[float]:
        """Collect labels, refresh the reward model, rewrite stored rewards."""
        cfg = self.cfg
        if cfg.no_hf:
            return None
        if self.labeler is None:
            raise RuntimeError(
                f"labeler {cfg.labeler!r} needs an annotation bridge to train"
            )
        fresh = self.labeler.collect()  # asynchronous labels from earlier rounds
        if cfg.batch_queries > 0:
            try:
                queries = prefs.generate_queries(
                    self.high_buffer, cfg.batch_queries, cfg.near_policy_episodes,
                    self.episode, self.rng,
                )
            except ValueError:
                queries = []
            if queries:
                self.labeler.submit(queries)
                fresh.extend(self.labeler.collect())
        self.pref_buffer.extend(fresh)
        self.labels_total += len(fresh)
        if self.bridge is not None:
            self.bridge.update_status(labels_total=self.labels_total)
        if len(self.pref_buffer) == 0:
            return None

        x1, x2, v = self.pref_buffer.arrays()
        n = x1.shape[0]
        losses = []
        for _ in range(cfg.reward_epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, cfg.reward_batch_size):
                idx = order[start : start + cfg.reward_batch_size]
                self.reward_model, self.reward_opt, loss = prefs.train_reward_model(
                    self.reward_model, (x1[idx], x2[idx], v[idx]), self.reward_opt
                )
                losses.append(loss)
        self.reward_model_trained = True
        self._rewrite_high_rewards()
        return float(np.mean(losses))

    def _distance_round(self) -> Optional[float]:
        """Harvest the freshest episode's segment pairs and refresh the distance model."""
        cfg = self.cfg
        if cfg.no_ddc:
            return None
        for episode_id in self.low_buffer.recent_episode_ids(1):
            achieved, g_subs, rewards = self.low_buffer.episode_trajectory(episode_id)
            start = 0
            n = achieved.shape[0]
            for t in range(1, n + 1):
                boundary = t == n or not np.array_equal(g_subs[t], g_subs[start])
                if not boundary:
                    continue
                segment = achieved[start:t]
                if segment.shape[0] >= 2:
                    reached = rewards[t - 1] == 1.0
                    pairs = dist_mod.build_distance_batch(
                        segment, g_subs[start], reached,
                        cfg.distance_pairs_per_segment, self.rng,
                        cfg.distance_unreached_pairs,
                    )
                    self.pair_buffer.push_pairs(pairs)
                start = t
        if len(self.pair_buffer) == 0:
            return None
        losses = []
        for _ in range(cfg.distance_steps):
            batch = self.pair_buffer.sample(cfg.distance_batch_size, self.rng)
            self.distance_model, self.distance_opt, loss = dist_mod.train_distance(
                self.distance_model, batch, self.distance_opt
            )
            losses.append(loss)
        return float(np.mean(losses))

    def _curriculum_round(self):
        cfg = self.cfg
        rate = hi.evaluate_subgoal_success(
            self.env, self.high, self._act_base_greedy, cfg.eval_rollouts, self.rng
        )
        # Exponential smoothing keeps the curriculum from slamming between its
        # bounds in domains where the probe rate is nearly binary.
        w = cfg.success_rate_smoothing
        self.subgoal_success_rate = (
            (1.0 - w) * self.subgoal_success_rate + w * rate
        )
        if not cfg.no_ddc:
            before = self.curriculum.k
            self.curriculum = hi.adjust_k(self.curriculum, self.subgoal_success_rate)
            self.metrics.adjustment_events.append(
                (self.episode, self.subgoal_success_rate, before, self.curriculum.k)
            )

    # ------------------------------------------------------------- evaluation

    def evaluate(self, episodes: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
        """Greedy full-task success rate over `episodes` evaluation rollouts."""
        episodes = self.cfg.eval_episodes if episodes is None else episodes
        if episodes <= 0:
            raise ValueError("evaluation needs at least one episode")
        rng = self.rng if rng is None else rng
        successes = 0
        for _ in range(episodes):
            successes += self._greedy_rollout(int(rng.integers(0, 2**31 - 1)))
        return successes / episodes

    def _greedy_rollout(self, seed: int) -> int:
        env = self.env.clone()
        s, g_env = env.reset(seed=seed)
        g_sub = hi.select_subgoal(self.high, s, g_env, "greedy")
        for _ in range(env.spec.horizon):
            res = env.step(self._act_base_greedy(s, g_sub))
            s = res.next_state
            if res.done:
                return int(goal_reward(res.achieved_goal, g_env, env.spec.epsilon) == 1.0)
            if goal_reward(res.achieved_goal, g_sub, env.spec.epsilon) == 1.0:
                g_sub = hi.select_subgoal(self.high, s, g_env, "greedy")
        return 0

    # -------------------------------------------------------------------- run

    def run(self, on_episode: Optional[Callable] = None) -> RunMetrics:
        cfg = self.cfg
        start_episode = self.episode
        for _ in range(start_episode, cfg.episodes):
            t0 = time.perf_counter()
            success = self._rollout_episode()
            high_metrics = self._train_high()
            low_metrics = self._train_low()

            reward_loss = None
            eval_rate = None
            if (self.episode + 1) % cfg.query_frequency == 0:
                reward_loss = self._preference_round()
            distance_loss = self._distance_round()
            self._curriculum_round()
            if (self.episode + 1) % cfg.eval_frequency == 0:
                eval_rate = self.evaluate()
                if eval_rate == 1.0 and self.metrics.first_full_success_episode is None:
                    self.metrics.first_full_success_episode = self.episode
            if self.bridge is not None:
                self.bridge.update_status(
                    episode=self.episode, k=self.curriculum.k,
                    alpha=self.dual.alpha,
                    subgoal_success_rate=self.subgoal_success_rate,
                )

            self.metrics.append(MetricsRow(
                episode=self.episode,
                success=success,
                subgoal_success_rate=self.subgoal_success_rate,
                k=self.curriculum.k,
                alpha=self.dual.alpha,
                mean_penalty=_fmt(high_metrics.get("mean_penalty")),
                mean_r_hi=_fmt(high_metrics.get("mean_r_hi")),
                high_actor_loss=_fmt(high_metrics.get("high_actor_loss")),
                high_critic_loss=_fmt(high_metrics.get("high_critic_loss")),
                low_base_loss=_fmt(low_metrics.get("low_base_loss")),
                low_explore_loss=_fmt(low_metrics.get("low_explore_loss")),
                rnd_loss=_fmt(low_metrics.get("rnd_loss")),
                reward_model_loss=_fmt(reward_loss),
                distance_loss=_fmt(distance_loss),
                labels_total=self.labels_total,
                eval_success=_fmt(eval_rate),
                wall_clock_s=time.perf_counter() - t0,
            ))
            self.episode += 1
            if on_episode is not None:
                on_episode(self)
            if cfg.checkpoint_every and self.episode % cfg.checkpoint_every == 0:
                out = Path(cfg.out_dir)
                out.mkdir(parents=True, exist_ok=True)
                save_checkpoint(self, out / f"checkpoint_ep{self.episode}.bin")
            if cfg.stop_on_success and self.metrics.first_full_success_episode is not None:
                break
        return self.metrics

    # ----------------------------------------------------------- state export

    def _net_entries(self) -> dict:
        entries = {
            "net/high_actor": nets.to_bytes(self.high.actor),
            "net/high_critic": nets.to_bytes(self.high.critic),
            "net/high_critic_target": nets.to_bytes(self.high.critic_target),
            "net/rnd_target": nets.to_bytes(self.rnd_pair.target),
            "net/rnd_predictor": nets.to_bytes(self.rnd_pair.predictor),
            "net/reward_model": nets.to_bytes(self.reward_model),
            "net/distance_model": nets.to_bytes(self.distance_model),
        }
        base, explore = self.dual_policy.base, self.dual_policy.explore
        if isinstance(base, lo.QPolicy):
            entries["net/low_base_q"] = nets.to_bytes(base.q)
            entries["net/low_base_q_target"] = nets.to_bytes(base.q_target)
            entries["net/low_explore_q"] = nets.to_bytes(explore.q)
            entries["net/low_explore_q_target"] = nets.to_bytes(explore.q_target)
        else:
            for tag, policy in (("base", base), ("explore", explore)):
                entries[f"net/low_{tag}_actor"] = nets.to_bytes(policy.actor)
                entries[f"net/low_{tag}_actor_target"] = nets.to_bytes(policy.actor_target)
                entries[f"net/low_{tag}_critic"] = nets.to_bytes(policy.critic)
                entries[f"net/low_{tag}_critic_target"] = nets.to_bytes(policy.critic_target)
        return entries


def _opt_entries(name: str, opt: nets.AdamState, entries: dict, meta: dict):
    entries[f"opt/{name}/m"] = opt.m
    entries[f"opt/{name}/v"] = opt.v
    meta["optimizers"][name] = {
        "learning_rate": opt.learning_rate, "step_count": opt.step_count,
        "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps,
    }


def _opt_from(name: str, entries: dict, meta: dict) -> nets.AdamState:
    info = meta["optimizers"][name]
    return nets.AdamState(
        learning_rate=info["learning_rate"], m=entries[f"opt/{name}/m"],
        v=entries[f"opt/{name}/v"], step_count=info["step_count"],
        beta1=info["beta1"], beta2=info["beta2"], eps=info["eps"],
    )


def save_checkpoint(trainer: Trainer, path) -> None:
    """Serialize the complete training state; see `checkpoint` for the format."""
    cfg = trainer.cfg
    meta = {
        "config": asdict(cfg),
        "episode": trainer.episode,
        "labels_total": trainer.labels_total,
        "subgoal_success_rate": trainer.subgoal_success_rate,
        "alpha": trainer.dual.alpha,
        "k": trainer.curriculum.k,
        "reward_model_trained": trainer.reward_model_trained,
        "rnd_stats": {
            "count": trainer.rnd_stats.count,
            "mean": trainer.rnd_stats.mean,
            "m2": trainer.rnd_stats.m2,
        },
        "rng_state": trainer.rng.bit_generator.state,
        "first_full_success_episode": trainer.metrics.first_full_success_episode,
        "high_segments": trainer.high_buffer._segment_counter,
        "optimizers": {},
        "buffers_included": bool(cfg.include_buffers_in_checkpoint),
    }
    entries = trainer._net_entries()
    _opt_entries("high_actor", trainer.high_actor_opt, entries, meta)
    _opt_entries("high_critic", trainer.high_critic_opt, entries, meta)
    _opt_entries("reward", trainer.reward_opt, entries, meta)
    _opt_entries("distance", trainer.distance_opt, entries, meta)
    _opt_entries("rnd", trainer.low_opts.rnd, entries, meta)
    _opt_entries("low_base_critic", trainer.low_opts.base_critic, entries, meta)
    _opt_entries("low_explore_critic", trainer.low_opts.explore_critic, entries, meta)
    if trainer.low_opts.base_actor is not None:
        _opt_entries("low_base_actor", trainer.low_opts.base_actor, entries, meta)
        _opt_entries("low_explore_actor", trainer.low_opts.explore_actor, entries, meta)
    if cfg.include_buffers_in_checkpoint:
        for tag, buf in (("low", trainer.low_buffer), ("high", trainer.high_buffer)):
            for col, arr in _buffer_rows(buf).items():
                entries[f"buffer/{tag}/{col}"] = arr
        pb = trainer.pair_buffer
        entries["buffer/pairs/x"] = pb._x[: pb.size].copy()
        entries["buffer/pairs/t"] = pb._t[: pb.size].copy()
        meta["pref_records"] = _pref_records_meta(trainer.pref_buffer)
    ckpt.save(path, meta, entries)


def _buffer_rows(buf) -> dict:
    """Used rows of every column, in insertion order (oldest first)."""
    order = []
    for episode_id in buf._episode_slots:
        order.extend(buf._episode_slots[episode_id])
    idx = np.asarray(order, dtype=np.int64)
    return {name: col[idx].copy() for name, col in buf._cols.items()}


def _pref_records_meta(pref_buffer) -> list:
    out = []
    for record in pref_buffer.all_records():
        p = record.pair
        out.append({
            "id": p.id, "v": record.v,
            "left_state": p.left_state.tolist(), "left_subgoal": p.left_subgoal.tolist(),
            "right_state": p.right_state.tolist(), "right_subgoal": p.right_subgoal.tolist(),
            "g_env": p.g_env.tolist(), "created_episode": p.created_episode,
        })
    return out


def load_checkpoint(path, bridge=None) -> Trainer:
    """Rebuild a `Trainer` from a checkpoint written by `save_checkpoint`."""
    meta, entries = ckpt.load(path)
    cfg = TrainConfig(**meta["config"])
    trainer = Trainer(cfg, bridge=bridge)
    trainer.episode = meta["episode"]
    trainer.labels_total = meta["labels_total"]
    trainer.subgoal_success_rate = meta["subgoal_success_rate"]
    trainer.dual = replace(trainer.dual, alpha=meta["alpha"])
    trainer.curriculum = replace(trainer.curriculum, k=meta["k"])
    trainer.reward_model_trained = meta["reward_model_trained"]
    trainer.rnd_stats = rnd_mod.RunningStats(**meta["rnd_stats"])
    trainer.rng.bit_generator.state = meta["rng_state"]
    trainer.metrics.first_full_success_episode = meta["first_full_success_episode"]
    trainer.high_buffer._segment_counter = meta["high_segments"]

    trainer.high = replace(
        trainer.high,
        actor=nets.from_bytes(entries["net/high_actor"]),
        critic=nets.from_bytes(entries["net/high_critic"]),
        critic_target=nets.from_bytes(entries["net/high_critic_target"]),
    )
    trainer.rnd_pair = rnd_mod.RndPair(
        nets.from_bytes(entries["net/rnd_target"]),
        nets.from_bytes(entries["net/rnd_predictor"]),
    )
    trainer.reward_model = nets.from_bytes(entries["net/reward_model"])
    trainer.distance_model = nets.from_bytes(entries["net/distance_model"])
    if "net/low_base_q" in entries:
        base = lo.QPolicy(nets.from_bytes(entries["net/low_base_q"]),
                          nets.from_bytes(entries["net/low_base_q_target"]))
        explore = lo.QPolicy(nets.from_bytes(entries["net/low_explore_q"]),
                             nets.from_bytes(entries["net/low_explore_q_target"]))
    else:
        def _ac(tag):
            scale = trainer.env.spec.action_space.high
            return lo.ACPolicy(
                nets.from_bytes(entries[f"net/low_{tag}_actor"]),
                nets.from_bytes(entries[f"net/low_{tag}_actor_target"]),
                nets.from_bytes(entries[f"net/low_{tag}_critic"]),
                nets.from_bytes(entries[f"net/low_{tag}_critic_target"]),
                scale,
            )
        base, explore = _ac("base"), _ac("explore")
    if cfg.no_eed:
        explore = base
    trainer.dual_policy = lo.DualPolicy(base=base, explore=explore,
                                        decoupled=not cfg.no_eed)

    trainer.high_actor_opt = _opt_from("high_actor", entries, meta)
    trainer.high_critic_opt = _opt_from("high_critic", entries, meta)
    trainer.reward_opt = _opt_from("reward", entries, meta)
    trainer.distance_opt = _opt_from("distance", entries, meta)
    trainer.low_opts = lo.LowOptimizers(
        base_critic=_opt_from("low_base_critic", entries, meta),
        base_actor=(_opt_from("low_base_actor", entries, meta)
                    if "opt/low_base_actor/m" in entries else None),
        explore_critic=_opt_from("low_explore_critic", entries, meta),
        explore_actor=(_opt_from("low_explore_actor", entries, meta)
                       if "opt/low_explore_actor/m" in entries else None),
        rnd=_opt_from("rnd", entries, meta),
    )

    if meta.get("buffers_included"):
        _restore_buffer(trainer.low_buffer, "low", entries, is_low=True)
        _restore_buffer(trainer.high_buffer, "high", entries, is_low=False)
        trainer.high_buffer._segment_counter = meta["high_segments"]
        x = entries.get("buffer/pairs/x")
        if x is not None and x.shape[0]:
            t = entries["buffer/pairs/t"]
            n = x.shape[0]
            trainer.pair_buffer._x[:n] = x
            trainer.pair_buffer._t[:n] = t
            trainer.pair_buffer.size = n
            trainer.pair_buffer._pos = n % trainer.pair_buffer.capacity
        for rec in meta.get("pref_records", []):
            pair = prefs.QueryPair(
                id=rec["id"],
                left_state=np.array(rec["left_state"]),
                left_subgoal=np.array(rec["left_subgoal"]),
                right_state=np.array(rec["right_state"]),
                right_subgoal=np.array(rec["right_subgoal"]),
                g_env=np.array(rec["g_env"]),
                created_episode=rec["created_episode"],
            )
            trainer.pref_buffer.push(prefs.PreferenceRecord(pair, rec["v"]))
    return trainer


def _restore_buffer(buf, tag: str, entries: dict, is_low: bool):
    key = f"buffer/{tag}/episode_id"
    if key not in entries:
        return
    episode_ids = entries[key]
    step_index = entries[f"buffer/{tag}/step_index"]
    cols = {
        name.split("/", 2)[2]: arr
        for name, arr in entries.items()
        if name.startswith(f"buffer/{tag}/")
    }
    segment_counter = getattr(buf, "_segment_counter", None)
    for i in range(episode_ids.shape[0]):
        fields = {name: arr[i] for name, arr in cols.items()
                  if name not in ("episode_id", "step_index")}
        buf._push_row(int(episode_ids[i]), int(step_index[i]), **fields)
    if segment_counter is not None:
        buf._segment_counter = segment_counter


def run_training(cfg: TrainConfig, bridge=None, resume_from=None,
                 on_episode: Optional[Callable] = None) -> tuple[Trainer, RunMetrics]:
    """Top-level entry: build (or resume) a trainer, run it, write artifacts."""
    if resume_from is not None:
        trainer = load_checkpoint(resume_from, bridge=bridge)
        trainer.cfg = cfg.validate()
        trainer.labeler = trainer._make_labeler()
    else:
        trainer = Trainer(cfg, bridge=bridge)
    t0 = time.perf_counter()
    metrics = trainer.run(on_episode=on_episode)
    wall = time.perf_counter() - t0
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics.to_csv(out / "metrics.csv")
    save_checkpoint(trainer, out / "checkpoint_final.bin")
    summary = {
        "episodes_run": trainer.episode,
        "first_full_success_episode": metrics.first_full_success_episode,
        "labels_total": trainer.labels_total,
        "wall_clock_s": wall,
        "final_k": trainer.curriculum.k,
        "final_alpha": trainer.dual.alpha,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return trainer, metrics


def evaluate_checkpoint(path, episodes: int = 50, seed: int = 12345) -> float:
    """Greedy success rate of a stored policy over fresh evaluation episodes."""
    trainer = load_checkpoint(path)
    return trainer.evaluate(episodes=episodes, rng=np.random.default_rng(seed))


def export_heatmaps(trainer: Trainer, resolution: int, out_dir) -> dict:
    """Grid evaluations over the arena for the reward/distance/overlay figures.

    Writes one CSV matrix per grid (rows: y ascending, cols: x ascending) and
    returns the grids keyed by name.  The overlay applies the current dual
    variable and constraint radius to the penalized objective.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    env = trainer.env.clone()
    s0, g_env = env.reset(seed=0)
    g_ref = env.achieved_goal(s0)
    bounds = (env.spec.goal_low, env.spec.goal_high)
    xs = np.linspace(bounds[0][0], bounds[1][0], resolution)
    ys = np.linspace(bounds[0][1], bounds[1][1], resolution)
    gx, gy = np.meshgrid(xs, ys)
    cells = np.stack([gx.ravel(), gy.ravel()], axis=1)
    n = cells.shape[0]

    reward = trainer._reward_fn(
        np.tile(s0, (n, 1)), cells, np.tile(g_env, (n, 1))
    ).reshape(resolution, resolution)
    _, _, distance_grid = dist_mod.export_distance_grid(
        trainer.distance_model, g_ref, bounds, resolution
    )
    overlay = reward - trainer.dual.alpha * hi.penalty_values(
        distance_grid, trainer.curriculum.k
    )
    grids = {"reward": reward, "distance": distance_grid, "overlay": overlay}
    if trainer.cfg.env == "four-rooms":
        from .envs import four_rooms_oracle_reward
        oracle = np.array([four_rooms_oracle_reward(c) for c in cells])
        grids["oracle"] = oracle.reshape(resolution, resolution)
    for name, grid in grids.items():
        lines = [",".join(repr(float(v)) for v in row) for row in grid]
        (out / f"heatmap_{name}.csv").write_text("\n".join(lines) + "\n")
    (out / "heatmap_meta.json").write_text(json.dumps({
        "resolution": resolution,
        "x": xs.tolist(), "y": ys.tolist(),
        "alpha": trainer.dual.alpha, "k": trainer.curriculum.k,
        "state": np.asarray(s0).tolist(), "g_env": np.asarray(g_env).tolist(),
        "g_ref": np.asarray(g_ref).tolist(),
    }, indent=2) + "\n")
    return grids
