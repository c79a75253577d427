"""Replay buffers with FIFO ring eviction, episode indexing and hindsight relabeling.

Both buffer levels store transitions column-wise in preallocated arrays and
keep, per episode, the ring slots of its transitions in insertion order.  That
index powers three things: future-strategy hindsight relabeling (a relabel
goal is the achieved goal of a uniformly drawn later step of the same
episode), near-policy windows over the most recent episodes, and trajectory
extraction for distance-model training.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from types import SimpleNamespace
from typing import Optional

import numpy as np

from .envs import goal_reward_batch


@dataclass
class GoalTransition:
    """One low-level step under a subgoal."""

    s: np.ndarray
    a: np.ndarray  # scalar array for discrete actions, vector for continuous
    r: float
    s_next: np.ndarray
    achieved_next: np.ndarray
    g_sub: np.ndarray
    episode_id: int
    step_index: int


@dataclass
class HighTransition:
    """One high-level decision: a subgoal issued at s_hi, pursued until s_end."""

    s_hi: np.ndarray
    g_sub: np.ndarray
    s_end: np.ndarray
    g_env: np.ndarray
    r_hi: float
    achieved_at_issue: np.ndarray
    episode_id: int
    done: bool  # episode ended with this segment
    entropy_bonus: float = 0.0  # behavior-policy exploration bonus inside r_hi


class _RingBuffer:
    """Column-wise ring storage with a per-episode slot index."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.size = 0
        self._pos = 0
        self._cols: dict[str, np.ndarray] = {}
        self._episode_slots: dict[int, deque] = {}
        self._episode_len: dict[int, int] = {}

    def __len__(self) -> int:
        return self.size

    def _ensure_column(self, name: str, value: np.ndarray):
        if name not in self._cols:
            value = np.asarray(value)
            self._cols[name] = np.zeros((self.capacity, *value.shape), dtype=value.dtype)

    def _push_row(self, episode_id: int, step_index: int, **fields):
        slot = self._pos
        if self.size == self.capacity:
            old_episode = int(self._cols["episode_id"][slot])
            old_slots = self._episode_slots[old_episode]
            assert old_slots[0] == slot, "ring eviction must be FIFO"
            old_slots.popleft()
            if not old_slots:
                del self._episode_slots[old_episode]
                del self._episode_len[old_episode]
        for name, value in fields.items():
            self._ensure_column(name, value)
            self._cols[name][slot] = value
        self._ensure_column("episode_id", np.asarray(episode_id, dtype=np.int64))
        self._cols["episode_id"][slot] = episode_id
        self._ensure_column("step_index", np.asarray(step_index, dtype=np.int64))
        self._cols["step_index"][slot] = step_index

        self._episode_slots.setdefault(episode_id, deque()).append(slot)
        self._episode_len[episode_id] = max(
            self._episode_len.get(episode_id, 0), step_index + 1
        )
        self._pos = (self._pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def gather(self, slots: np.ndarray) -> SimpleNamespace:
        return SimpleNamespace(
            **{name: col[slots].copy() for name, col in self._cols.items()}
        )

    def uniform_slots(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=count) if self.size < self.capacity \
            else rng.integers(0, self.capacity, size=count)

    def recent_episode_ids(self, last_n_episodes: int) -> list[int]:
        if last_n_episodes < 1:
            raise ValueError("window must cover at least one episode")
        ids = list(self._episode_slots.keys())
        return ids[-last_n_episodes:]

    def window_slots(self, last_n_episodes: int) -> np.ndarray:
        slots: list[int] = []
        for e in self.recent_episode_ids(last_n_episodes):
            slots.extend(self._episode_slots[e])
        if not slots:
            raise ValueError("near-policy window is empty")
        return np.asarray(slots, dtype=np.int64)

    def episode_slots(self, episode_id: int) -> deque:
        return self._episode_slots[episode_id]

    def episode_length(self, episode_id: int) -> int:
        return self._episode_len[episode_id]


class LowBuffer(_RingBuffer):
    """Replay storage for low-level goal transitions."""

    def push(self, t: GoalTransition):
        if not (np.isfinite(t.s).all() and np.isfinite(t.s_next).all()
                and np.isfinite(t.g_sub).all() and np.isfinite(t.r)):
            raise ValueError("non-finite transition fields")
        self._push_row(
            t.episode_id,
            t.step_index,
            s=np.asarray(t.s, dtype=np.float64),
            a=np.asarray(t.a, dtype=np.float64),
            r=np.float64(t.r),
            s_next=np.asarray(t.s_next, dtype=np.float64),
            achieved_next=np.asarray(t.achieved_next, dtype=np.float64),
            g_sub=np.asarray(t.g_sub, dtype=np.float64),
        )

    def sample_hindsight(
        self,
        batch_size: int,
        ratio: float,
        epsilon: float,
        rng: np.random.Generator,
    ) -> SimpleNamespace:
        """Uniform batch where each row is relabeled with probability `ratio`.

        A relabeled row receives the achieved goal of a uniformly chosen step
        j in [t, L-1] of its own episode, and its reward is recomputed from
        the contact test against the new goal.
        """
        slots = self.uniform_slots(batch_size, rng)
        batch = self.gather(slots)
        relabel = rng.random(batch_size) < ratio
        picked = np.flatnonzero(relabel)
        if picked.size:
            episodes = batch.episode_id[picked]
            t = batch.step_index[picked]
            uniq, inverse = np.unique(episodes, return_inverse=True)
            lengths = np.empty(uniq.size, dtype=np.int64)
            firsts = np.empty(uniq.size, dtype=np.int64)
            starts = np.empty(uniq.size, dtype=np.int64)
            contiguous = True
            for i, e in enumerate(uniq):
                ep_slots = self._episode_slots[int(e)]
                lengths[i] = self._episode_len[int(e)]
                firsts[i] = lengths[i] - len(ep_slots)
                starts[i] = ep_slots[0]
                if ep_slots[-1] - ep_slots[0] != len(ep_slots) - 1:
                    contiguous = False
            length_of = lengths[inverse]
            # future index j uniform over [t, L-1]
            j = t + (rng.random(picked.size) * (length_of - t)).astype(np.int64)
            if contiguous:
                goal_slots = starts[inverse] + (j - firsts[inverse])
                batch.g_sub[picked] = self._cols["achieved_next"][goal_slots]
            else:
                # an episode wrapped around the ring: index through its deque
                for n, i in enumerate(picked):
                    ep_slots = self._episode_slots[int(episodes[n])]
                    first = self._episode_len[int(episodes[n])] - len(ep_slots)
                    batch.g_sub[i] = self._cols["achieved_next"][ep_slots[int(j[n]) - first]]
        batch.r = goal_reward_batch(batch.achieved_next, batch.g_sub, epsilon)
        batch.relabeled = relabel
        return batch

    def episode_trajectory(self, episode_id: int):
        """Per-step (achieved_next, g_sub, r) arrays of one stored episode, in step order."""
        slots = np.asarray(self._episode_slots[episode_id], dtype=np.int64)
        return (
            self._cols["achieved_next"][slots].copy(),
            self._cols["g_sub"][slots].copy(),
            self._cols["r"][slots].copy(),
        )


class HighBuffer(_RingBuffer):
    """Replay storage for high-level decisions; rewards are rewritable in place."""

    def __init__(self, capacity: int):
        super().__init__(capacity)
        self._segment_counter = 0

    def push(self, t: HighTransition):
        if not np.isfinite(t.r_hi):
            raise ValueError("non-finite high-level reward")
        self._push_row(
            t.episode_id,
            self._segment_counter,
            s_hi=np.asarray(t.s_hi, dtype=np.float64),
            g_sub=np.asarray(t.g_sub, dtype=np.float64),
            s_end=np.asarray(t.s_end, dtype=np.float64),
            g_env=np.asarray(t.g_env, dtype=np.float64),
            r_hi=np.float64(t.r_hi),
            achieved_at_issue=np.asarray(t.achieved_at_issue, dtype=np.float64),
            done=np.float64(1.0 if t.done else 0.0),
            entropy_bonus=np.float64(t.entropy_bonus),
        )
        self._segment_counter += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> SimpleNamespace:
        return self.gather(self.uniform_slots(batch_size, rng))

    def sample_near_policy(
        self, last_n_episodes: int, count: int, rng: np.random.Generator
    ) -> SimpleNamespace:
        """Uniform sample restricted to the most recent `last_n_episodes` episodes."""
        window = self.window_slots(last_n_episodes)
        picks = window[rng.integers(0, len(window), size=count)]
        return self.gather(picks)

    def used_column(self, name: str) -> np.ndarray:
        """Stored values of one column in physical slot order (rows 0..size-1).

        Row-aligned with the arrays handed to `rewrite_rewards`' callback.
        """
        return self._cols[name][: self.size].copy()

    def rewrite_rewards(self, reward_model_fn) -> int:
        """Replace every stored r_hi with a fresh reward-model evaluation.

        `reward_model_fn(s_hi, g_sub, g_env)` receives row-aligned arrays and
        returns one reward per row.  Returns the number of rewritten entries.
        """
        if self.size == 0:
            return 0
        slots = np.arange(self.size)
        fresh = np.asarray(
            reward_model_fn(
                self._cols["s_hi"][slots],
                self._cols["g_sub"][slots],
                self._cols["g_env"][slots],
            ),
            dtype=np.float64,
        ).reshape(-1)
        self._cols["r_hi"][slots] = fresh
        return int(self.size)


def sample_near_policy(buffer: _RingBuffer, last_n_episodes: int, count: int,
                       rng: np.random.Generator) -> SimpleNamespace:
    """Module-level convenience wrapper over the buffer's near-policy sampler."""
    window = buffer.window_slots(last_n_episodes)
    picks = window[rng.integers(0, len(window), size=count)]
    return buffer.gather(picks)
