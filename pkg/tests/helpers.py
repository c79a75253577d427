"""Shared test utilities: finite-difference gradient oracle and a tiny gridworld."""

from __future__ import annotations

import numpy as np

from prefhrl.envs import Discrete, EnvSpec, StepResult, goal_reward


def finite_difference_grad(loss_of_params, params: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of a flat parameter vector."""
    grad = np.zeros_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] += eps
        up = loss_of_params(bumped)
        bumped[i] -= 2 * eps
        down = loss_of_params(bumped)
        grad[i] = (up - down) / (2 * eps)
    return grad


def relative_grad_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative disagreement between two gradient vectors."""
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


class GridWorld:
    """Deterministic 5x5 goal-conditioned gridworld on the same interface as the envs.

    States and goals are integer cell coordinates scaled into [0, 1]; actions
    are stay/E/N/W/S.  Used as a value-iteration-checkable sanity oracle for
    the low-level learner.
    """

    name = "gridworld"
    SIZE = 5
    MOVES = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]], dtype=np.int64)

    def __init__(self, goal_cell=(4, 4), horizon: int = 30):
        self.goal_cell = np.array(goal_cell, dtype=np.int64)
        self.spec = EnvSpec(
            state_dim=2,
            action_space=Discrete(5),
            goal_dim=2,
            epsilon=0.1,  # cells are 0.25 apart after scaling: exact-cell contact
            horizon=horizon,
            goal_low=np.zeros(2),
            goal_high=np.ones(2),
        )
        self._cell = None
        self._steps = 0
        self._done = True

    def _scale(self, cell) -> np.ndarray:
        return np.asarray(cell, dtype=np.float64) / (self.SIZE - 1)

    def reset(self, seed=None):
        rng = np.random.default_rng(seed)
        self._cell = np.array([rng.integers(0, self.SIZE), rng.integers(0, self.SIZE)])
        self._steps = 0
        self._done = False
        return self._scale(self._cell), self._scale(self.goal_cell)

    def achieved_goal(self, state):
        return np.asarray(state, dtype=np.float64).copy()

    def step(self, action: int) -> StepResult:
        if self._done:
            raise RuntimeError("step() after episode end")
        move = self.MOVES[int(action)]
        self._cell = np.clip(self._cell + move, 0, self.SIZE - 1)
        self._steps += 1
        state = self._scale(self._cell)
        reached = goal_reward(state, self._scale(self.goal_cell), self.spec.epsilon) == 1.0
        self._done = reached or self._steps >= self.spec.horizon
        return StepResult(state, state.copy(), self._done)

    def clone(self) -> "GridWorld":
        return GridWorld(tuple(self.goal_cell), self.spec.horizon)

    def geometry(self) -> dict:
        return {"bounds": [[0.0, 0.0], [1.0, 1.0]], "walls": [],
                "start": None, "goal": self._scale(self.goal_cell).tolist()}


def gridworld_value_iteration(goal_cell, gamma: float, tol: float = 1e-10):
    """Optimal state values for `GridWorld` under success-as-terminal bootstrapping.

    V(s) = max_a [ r(s') + gamma * (1 - r(s')) * V(s') ] with r the exact-cell
    contact reward; the goal cell itself is absorbing with value matching the
    learner's target convention.
    """
    size = GridWorld.SIZE
    values = np.zeros((size, size))
    while True:
        delta = 0.0
        for x in range(size):
            for y in range(size):
                best = -np.inf
                for move in GridWorld.MOVES:
                    nx = min(max(x + move[0], 0), size - 1)
                    ny = min(max(y + move[1], 0), size - 1)
                    r = 1.0 if (nx, ny) == tuple(goal_cell) else 0.0
                    best = max(best, r + gamma * (1.0 - r) * values[nx, ny])
                delta = max(delta, abs(best - values[x, y]))
                values[x, y] = best
        if delta < tol:
            return values
