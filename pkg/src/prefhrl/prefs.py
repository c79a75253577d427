"""Preference pipeline: query pairs, labeling backends and reward-model training.

Queries pair two (state, subgoal) tuples drawn from the near-policy window of
the high-level buffer.  Labels v in {0, 0.5, 1} feed a Bradley-Terry objective
on a reward model r(s, subgoal, goal) with a sigmoid head.  Labeling is either
scripted against a dense oracle score or handed to human annotators through
the annotation bridge, optionally with an oracle fallback after a timeout.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nets
from .envs import four_rooms_oracle_reward
from .nets import AdamState, Mlp

VALID_LABELS = (0.0, 0.5, 1.0)
TIE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class QueryPair:
    """Two candidate (state, subgoal) tuples competing under one episode goal."""

    id: str
    left_state: np.ndarray
    left_subgoal: np.ndarray
    right_state: np.ndarray
    right_subgoal: np.ndarray
    g_env: np.ndarray
    created_episode: int


@dataclass(frozen=True)
class PreferenceRecord:
    pair: QueryPair
    v: float  # 0 prefers left, 1 prefers right, 0.5 tie

    def __post_init__(self):
        if self.v not in VALID_LABELS:
            raise ValueError(f"label {self.v} not in {VALID_LABELS}")


def generate_queries(
    high_buffer,
    batch_queries: int,
    window_episodes: int,
    episode: int,
    rng: np.random.Generator,
) -> list[QueryPair]:
    """Draw `batch_queries` pairs uniformly from the near-policy window.

    Left and right are sampled independently but never share a buffer index.
    The pair's episode goal is taken from the left tuple.
    """
    if batch_queries == 0:
        return []
    window = high_buffer.window_slots(window_episodes)
    if len(window) < 2:
        raise ValueError("near-policy window has fewer than two decisions")
    queries = []
    for n in range(batch_queries):
        i = int(rng.integers(0, len(window)))
        j = int(rng.integers(0, len(window) - 1))
        if j >= i:
            j += 1
        left = high_buffer.gather(window[i : i + 1])
        right = high_buffer.gather(window[j : j + 1])
        queries.append(
            QueryPair(
                id=f"ep{episode}-q{n}",
                left_state=left.s_hi[0],
                left_subgoal=left.g_sub[0],
                right_state=right.s_hi[0],
                right_subgoal=right.g_sub[0],
                g_env=left.g_env[0],
                created_episode=episode,
            )
        )
    return queries


def oracle_score(subgoal: np.ndarray, g_env: np.ndarray, env_kind: str) -> float:
    """Dense scripted score of a subgoal: higher is better."""
    if env_kind == "four-rooms":
        return four_rooms_oracle_reward(subgoal)
    return -float(np.linalg.norm(np.asarray(subgoal) - np.asarray(g_env)))


def oracle_label(pair: QueryPair, env_kind: str, tie_tol: float = TIE_TOLERANCE) -> float:
    """Scripted label: prefer the subgoal with the higher oracle score."""
    s1 = oracle_score(pair.left_subgoal, pair.g_env, env_kind)
    s2 = oracle_score(pair.right_subgoal, pair.g_env, env_kind)
    if abs(s1 - s2) < tie_tol:
        return 0.5
    return 0.0 if s1 > s2 else 1.0


def init_reward_model(state_dim: int, goal_dim: int, hidden_size: int,
                      hidden_layers: int, seed: int) -> Mlp:
    sizes = nets.hidden_stack(state_dim + 2 * goal_dim, hidden_size, hidden_layers, 1)
    return nets.init_mlp(sizes, seed=seed, output_activation="sigmoid")


def reward_model_inputs(s, g_sub, g_env) -> np.ndarray:
    return np.concatenate(
        [np.atleast_2d(s), np.atleast_2d(g_sub), np.atleast_2d(g_env)], axis=1
    )


def reward_value(model: Mlp, s, g_sub, g_env):
    out = nets.forward(model, reward_model_inputs(s, g_sub, g_env))
    return out[:, 0]


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    # log(1 / (1 + exp(-x))) without overflow on either tail
    out = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))
    return out


def preference_prob(model: Mlp, pair: QueryPair) -> tuple[float, float]:
    """Bradley-Terry probability that each tuple is preferred; p1 + p2 == 1."""
    r1 = reward_value(model, pair.left_state[None], pair.left_subgoal[None], pair.g_env[None])[0]
    r2 = reward_value(model, pair.right_state[None], pair.right_subgoal[None], pair.g_env[None])[0]
    p1 = float(nets.sigmoid(np.array([r1 - r2]))[0])
    return p1, 1.0 - p1


def _bt_loss(model: Mlp, batch) -> tuple[float, np.ndarray]:
    """Negated Bradley-Terry objective with labels v in {0, 0.5, 1}."""
    x1, x2, v = batch
    n = x1.shape[0]
    r1, cache1 = nets.forward_cached(model, x1)
    r2, cache2 = nets.forward_cached(model, x2)
    delta = r1[:, 0] - r2[:, 0]
    log_p1 = _log_sigmoid(delta)
    log_p2 = _log_sigmoid(-delta)
    loss = -float(np.mean((1.0 - v) * log_p1 + v * log_p2))
    p1 = nets.sigmoid(delta)
    # d(-objective)/d(delta), averaged over the batch
    d_delta = (-(1.0 - v) * (1.0 - p1) + v * p1) / n
    g1, _ = nets.backward(model, cache1, d_delta[:, None])
    g2, _ = nets.backward(model, cache2, -d_delta[:, None])
    return loss, g1 + g2


def records_to_arrays(records) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x1 = np.stack([
        np.concatenate([r.pair.left_state, r.pair.left_subgoal, r.pair.g_env])
        for r in records
    ])
    x2 = np.stack([
        np.concatenate([r.pair.right_state, r.pair.right_subgoal, r.pair.g_env])
        for r in records
    ])
    v = np.array([r.v for r in records], dtype=np.float64)
    return x1, x2, v


def train_reward_model(model: Mlp, records, opt: AdamState):
    """One gradient step of the Bradley-Terry objective on labeled records."""
    if isinstance(records, tuple):
        batch = records
    else:
        if len(records) == 0:
            raise ValueError("no preference records to train on")
        batch = records_to_arrays(records)
    return nets.grad_step(model, _bt_loss, batch, opt)


class PreferenceBuffer:
    """FIFO pool of labeled preference records."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._records: list[PreferenceRecord] = []

    def __len__(self) -> int:
        return len(self._records)

    def push(self, record: PreferenceRecord):
        self._records.append(record)
        if len(self._records) > self.capacity:
            self._records = self._records[-self.capacity:]

    def extend(self, records):
        for r in records:
            self.push(r)

    def all_records(self) -> list[PreferenceRecord]:
        return list(self._records)

    def arrays(self):
        return records_to_arrays(self._records)


class OracleLabeler:
    """Scripted annotator; labels immediately from the dense oracle score."""

    def __init__(self, env_kind: str):
        self.env_kind = env_kind
        self.labels_issued = 0

    def submit(self, queries) -> None:
        self._pending = list(queries)

    def collect(self) -> list[PreferenceRecord]:
        records = [
            PreferenceRecord(q, oracle_label(q, self.env_kind))
            for q in getattr(self, "_pending", [])
        ]
        self._pending = []
        self.labels_issued += len(records)
        return records


class HumanLabeler:
    """Routes queries to the annotation bridge and drains labels asynchronously.

    With a fallback oracle configured, queries older than `timeout_s` are
    labeled by the oracle instead of blocking training; without one they are
    dropped once expired.
    """

    def __init__(self, bridge, env_kind: str, timeout_s: float = 300.0,
                 fallback: bool = False, clock=time.monotonic):
        self.bridge = bridge
        self.env_kind = env_kind
        self.timeout_s = timeout_s
        self.fallback = fallback
        self.clock = clock
        self.labels_issued = 0
        self._in_flight: dict[str, tuple[QueryPair, float]] = {}

    def submit(self, queries) -> None:
        now = self.clock()
        for q in queries:
            self._in_flight[q.id] = (q, now)
        self.bridge.publish(queries)

    def collect(self) -> list[PreferenceRecord]:
        records = []
        for query_id, v in self.bridge.drain_labels():
            entry = self._in_flight.pop(query_id, None)
            if entry is not None:
                records.append(PreferenceRecord(entry[0], v))
        now = self.clock()
        expired = [qid for qid, (_, t) in self._in_flight.items()
                   if now - t > self.timeout_s]
        for qid in expired:
            pair, _ = self._in_flight.pop(qid)
            self.bridge.retract(qid)
            if self.fallback:
                records.append(PreferenceRecord(pair, oracle_label(pair, self.env_kind)))
        self.labels_issued += len(records)
        return records
