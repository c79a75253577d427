"""Novelty bonus from random network distillation.

A frozen random target network embeds states; a predictor network is trained
to match it.  The squared embedding error is the raw novelty reward, which is
z-scored against running statistics of the rewards seen during rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import nets
from .nets import AdamState, Mlp


@dataclass(frozen=True)
class RndPair:
    target: Mlp  # frozen after init
    predictor: Mlp


def init_rnd(state_dim: int, hidden_size: int, hidden_layers: int,
             represent_size: int, seed: int) -> RndPair:
    sizes = nets.hidden_stack(state_dim, hidden_size, hidden_layers, represent_size)
    # Distinct sub-seeds so the predictor starts away from the target.
    target = nets.init_mlp(sizes, seed=seed * 2 + 1)
    predictor = nets.init_mlp(sizes, seed=seed * 2 + 2)
    return RndPair(target, predictor)


def rnd_reward(pair: RndPair, s: np.ndarray):
    """Squared embedding error ||predictor(s) - target(s)||^2, >= 0.

    Accepts a single state or a batch; returns a scalar or a vector to match.
    """
    diff = nets.forward(pair.predictor, s) - nets.forward(pair.target, s)
    if diff.ndim == 1:
        return float(np.sum(diff**2))
    return np.sum(diff**2, axis=1)


def distillation_loss(predictor: Mlp, batch) -> tuple[float, np.ndarray]:
    """Mean squared embedding error and its gradient wrt predictor parameters."""
    states, target_emb = batch
    pred, cache = nets.forward_cached(predictor, states)
    diff = pred - target_emb
    loss = float(np.mean(np.sum(diff**2, axis=1)))
    d_out = 2.0 * diff / states.shape[0]
    grad, _ = nets.backward(predictor, cache, d_out)
    return loss, grad


def train_rnd(pair: RndPair, states: np.ndarray, opt: AdamState):
    """One distillation step on `states`; the target network never changes.

    Returns `(pair, opt, loss)` with the pre-step mean squared embedding error.
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] == 0:
        raise ValueError("train_rnd needs a nonempty (batch, state_dim) array")
    target_emb = nets.forward(pair.target, states)
    predictor, opt, loss = nets.grad_step(
        pair.predictor, distillation_loss, (states, target_emb), opt
    )
    return replace(pair, predictor=predictor), opt, loss


@dataclass
class RunningStats:
    """Streaming mean/variance (Welford) for novelty-reward normalization."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, value):
        for x in np.atleast_1d(np.asarray(value, dtype=np.float64)):
            self.count += 1
            delta = x - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (x - self.mean)

    @property
    def std(self) -> float:
        if self.count < 2:
            return 0.0
        return float(np.sqrt(max(self.m2 / self.count, 0.0)))


def normalize_intrinsic(stats: RunningStats, r_rnd):
    """Z-score the raw novelty reward; returns 0 until two samples are seen."""
    if stats.count < 2:
        return np.zeros_like(np.asarray(r_rnd, dtype=np.float64)) if np.ndim(r_rnd) else 0.0
    sigma = max(stats.std, 1e-8)
    return (np.asarray(r_rnd, dtype=np.float64) - stats.mean) / sigma
