"""Learned step-distance between goals, trained on near-policy trajectories.

Targets are normalized index gaps |i - j| / L inside a trajectory.  When a
trajectory failed to reach its subgoal, extra pairs (achieved_i, subgoal) with
target 1 teach the model that unreached subgoals are maximally far, so the
subgoal-difficulty constraint cannot mistake hard subgoals for easy ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets
from .nets import AdamState, Mlp


@dataclass(frozen=True)
class DistancePair:
    g_a: np.ndarray
    g_b: np.ndarray
    target: float


def init_distance_model(goal_dim: int, hidden_size: int, hidden_layers: int,
                        seed: int) -> Mlp:
    sizes = nets.hidden_stack(2 * goal_dim, hidden_size, hidden_layers, 1)
    return nets.init_mlp(sizes, seed=seed, output_activation="sigmoid")


def predict_distance(model: Mlp, g_a: np.ndarray, g_b: np.ndarray):
    """d(g_a, g_b) in [0, 1]; accepts single goals or row-aligned batches."""
    g_a = np.asarray(g_a, dtype=np.float64)
    g_b = np.asarray(g_b, dtype=np.float64)
    x = np.concatenate([g_a, g_b], axis=-1)
    out = nets.forward(model, x)
    return float(out[0]) if out.ndim == 1 else out[:, 0]


def build_distance_batch(
    trajectory: np.ndarray,
    g_sub: np.ndarray,
    reached: bool,
    count: int,
    rng: np.random.Generator,
    unreached_count: int = 16,
) -> list[DistancePair]:
    """Sample training pairs from one trajectory of achieved goals.

    Within-trajectory pairs pick i <= j uniformly and carry target |i - j| / L.
    If the trajectory's subgoal was not reached, `unreached_count` additional
    pairs (achieved_i, g_sub) with target 1 are appended.
    """
    trajectory = np.asarray(trajectory, dtype=np.float64)
    length = trajectory.shape[0]
    if length < 2:
        raise ValueError("trajectory must contain at least two points")
    pairs = []
    for _ in range(count):
        i = int(rng.integers(0, length))
        j = int(rng.integers(i, length))
        pairs.append(
            DistancePair(trajectory[i].copy(), trajectory[j].copy(), abs(i - j) / length)
        )
    if not reached:
        g_sub = np.asarray(g_sub, dtype=np.float64)
        for _ in range(unreached_count):
            i = int(rng.integers(0, length))
            pairs.append(DistancePair(trajectory[i].copy(), g_sub.copy(), 1.0))
    return pairs


def _distance_loss(model: Mlp, batch) -> tuple[float, np.ndarray]:
    x, targets = batch
    pred, cache = nets.forward_cached(model, x)
    diff = pred[:, 0] - targets
    loss = 0.5 * float(np.mean(diff**2))
    d_out = (diff / x.shape[0])[:, None]
    grad, _ = nets.backward(model, cache, d_out)
    return loss, grad


def pairs_to_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([np.concatenate([p.g_a, p.g_b]) for p in pairs])
    targets = np.array([p.target for p in pairs], dtype=np.float64)
    return x, targets


def train_distance(model: Mlp, batch, opt: AdamState):
    """One halved-MSE step on a batch of `DistancePair`s (or prebuilt arrays)."""
    if isinstance(batch, tuple):
        x, targets = batch
    else:
        if len(batch) == 0:
            raise ValueError("empty distance batch")
        x, targets = pairs_to_arrays(batch)
    return nets.grad_step(model, _distance_loss, (x, targets), opt)


class DistancePairBuffer:
    """FIFO pool of training pairs (capacity per the distance-model buffer size)."""

    def __init__(self, capacity: int, goal_dim: int):
        self.capacity = int(capacity)
        self._x = np.zeros((self.capacity, 2 * goal_dim))
        self._t = np.zeros(self.capacity)
        self._pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push_pairs(self, pairs):
        for p in pairs:
            self._x[self._pos] = np.concatenate([p.g_a, p.g_b])
            self._t[self._pos] = p.target
            self._pos = (self._pos + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size == 0:
            raise ValueError("distance pair buffer is empty")
        idx = rng.integers(0, self.size, size=min(batch_size, self.size))
        return self._x[idx].copy(), self._t[idx].copy()


def export_distance_grid(model: Mlp, g_ref: np.ndarray, bounds, resolution: int):
    """Evaluate d(cell, g_ref) on a resolution x resolution grid over `bounds`.

    Returns (xs, ys, grid) with grid[row, col] = d((xs[col], ys[row]), g_ref).
    """
    (x0, y0), (x1, y1) = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    gx, gy = np.meshgrid(xs, ys)
    cells = np.stack([gx.ravel(), gy.ravel()], axis=1)
    refs = np.tile(np.asarray(g_ref, dtype=np.float64), (cells.shape[0], 1))
    values = predict_distance(model, cells, refs)
    return xs, ys, values.reshape(resolution, resolution)
