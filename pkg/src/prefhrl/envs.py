"""Goal-conditioned desk-scale environments.

Two instances share one interface: a discrete four-room navigation arena and a
continuous point-mass pushing task.  Both live on the square [-0.5, 0.5]^2,
use a contact threshold of 0.05 in goal space and run 100-step episodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

ARENA_HALF = 0.5
CONTACT_EPS = 0.05
HORIZON = 100


@dataclass(frozen=True)
class Discrete:
    n: int


@dataclass(frozen=True)
class Box:
    dim: int
    low: float
    high: float


@dataclass(frozen=True)
class EnvSpec:
    """Static description of a goal-conditioned environment."""

    state_dim: int
    action_space: Union[Discrete, Box]
    goal_dim: int
    epsilon: float
    horizon: int
    goal_low: np.ndarray
    goal_high: np.ndarray

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    achieved_goal: np.ndarray
    done: bool


def goal_reward(achieved: np.ndarray, goal: np.ndarray, epsilon: float) -> float:
    """Sparse contact reward: 1.0 iff the strict Euclidean distance is below epsilon."""
    achieved = np.asarray(achieved, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if achieved.shape != goal.shape:
        raise ValueError(f"goal dimension mismatch: {achieved.shape} vs {goal.shape}")
    return 1.0 if float(np.linalg.norm(achieved - goal)) < epsilon else 0.0


def goal_reward_batch(achieved: np.ndarray, goal: np.ndarray, epsilon: float) -> np.ndarray:
    """Vectorized `goal_reward` over row-aligned (n, goal_dim) arrays."""
    achieved = np.asarray(achieved, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    if achieved.shape != goal.shape:
        raise ValueError(f"goal dimension mismatch: {achieved.shape} vs {goal.shape}")
    dist = np.linalg.norm(achieved - goal, axis=-1)
    return (dist < epsilon).astype(np.float64)


# Anchor points and offsets of the four-rooms shaping reward, one quadrant
# each, tested in listed order (first match wins on quadrant boundaries).
_ORACLE_CASES = (
    (np.array([0.25, 0.25]), 0.0),
    (np.array([0.0, 0.3]), -0.3),
    (np.array([-0.3, 0.0]), -0.6),
    (np.array([0.0, -0.3]), -1.0),
)


def four_rooms_oracle_reward(s) -> float:
    """Dense shaping value used by the scripted annotator in the four-rooms arena.

    Piecewise negative distance to a per-quadrant anchor with a per-quadrant
    offset.  Quadrant membership uses closed half-planes checked in listed
    order, so points on a shared boundary take the earlier case: (-0.3, 0)
    falls in the upper-left case and scores -(0.3*sqrt(2)) - 0.3, not -0.6.
    """
    x, y = float(s[0]), float(s[1])
    if x >= 0 and y >= 0:
        anchor, offset = _ORACLE_CASES[0]
    elif x <= 0 and y >= 0:
        anchor, offset = _ORACLE_CASES[1]
    elif x <= 0 and y <= 0:
        anchor, offset = _ORACLE_CASES[2]
    else:
        anchor, offset = _ORACLE_CASES[3]
    return float(-np.linalg.norm(np.array([x, y]) - anchor) + offset)


@dataclass(frozen=True)
class Doorway:
    """Gap in an axis-aligned wall, as a closed interval on the wall axis."""

    center: float
    halfwidth: float

    def contains(self, coord: float) -> bool:
        return self.center - self.halfwidth <= coord <= self.center + self.halfwidth


@dataclass(frozen=True)
class Wall:
    """Zero-thickness wall on the line {axis coordinate == at} with doorway gaps."""

    axis: int  # 0: wall on x == at, 1: wall on y == at
    at: float
    doorways: tuple[Doorway, ...]

    def passable_at(self, coord: float) -> bool:
        return any(d.contains(coord) for d in self.doorways)

    def blocks(self, p: np.ndarray, q: np.ndarray) -> bool:
        """True if moving from p to q is stopped by this wall."""
        a, b = float(p[self.axis]), float(q[self.axis])
        other = 1 - self.axis
        if a != self.at and b != self.at:
            if (a - self.at) * (b - self.at) > 0:
                return False  # both strictly on one side
            t = (self.at - a) / (b - a)
            cross = p[other] + t * (q[other] - p[other])
            return not self.passable_at(float(cross))
        if b == self.at and a != self.at:
            # Landing on the wall line is only possible inside a doorway.
            return not self.passable_at(float(q[other]))
        if a == self.at and b == self.at:
            # Sliding along the wall line: the whole segment must stay in one gap.
            lo, hi = sorted((float(p[other]), float(q[other])))
            return not any(
                d.center - d.halfwidth <= lo and hi <= d.center + d.halfwidth
                for d in self.doorways
            )
        return False  # leaving the wall line into either room


class FourRooms:
    """Four-room navigation on a 0.05 lattice over [-0.5, 0.5]^2.

    Walls run along x = 0 and y = 0 with three doorway gaps of width 0.1
    centered at (0, -0.25), (-0.25, 0) and (0, 0.25), so the path from the
    start (0.4, -0.4) to the goal (0.25, 0.25) has to traverse three rooms
    counterclockwise.  Nine actions: stay plus the eight compass directions,
    each moving 0.05 per axis.
    """

    name = "four-rooms"

    # stay, E, NE, N, NW, W, SW, S, SE
    DIRECTIONS = np.array(
        [
            [0, 0],
            [1, 0],
            [1, 1],
            [0, 1],
            [-1, 1],
            [-1, 0],
            [-1, -1],
            [0, -1],
            [1, -1],
        ],
        dtype=np.float64,
    )

    START = np.array([0.4, -0.4])
    GOAL = np.array([0.25, 0.25])

    def __init__(self, step_size: float = 0.05, epsilon: float = CONTACT_EPS,
                 horizon: int = HORIZON, doorway_halfwidth: float = 0.05):
        self.step_size = step_size
        # x = 0 wall: doors between the bottom rooms and between the top rooms;
        # y = 0 wall: one door between the left rooms.  No direct passage
        # between the bottom-right and top-right rooms.
        self.walls = (
            Wall(0, 0.0, (Doorway(-0.25, doorway_halfwidth), Doorway(0.25, doorway_halfwidth))),
            Wall(1, 0.0, (Doorway(-0.25, doorway_halfwidth),)),
        )
        self.spec = EnvSpec(
            state_dim=2,
            action_space=Discrete(9),
            goal_dim=2,
            epsilon=epsilon,
            horizon=horizon,
            goal_low=np.array([-ARENA_HALF, -ARENA_HALF]),
            goal_high=np.array([ARENA_HALF, ARENA_HALF]),
        )
        self._pos: Optional[np.ndarray] = None
        self._goal: Optional[np.ndarray] = None
        self._steps = 0
        self._done = True

    def reset(self, seed: Optional[int] = None):
        self._pos = self.START.copy()
        self._goal = self.GOAL.copy()
        self._steps = 0
        self._done = False
        return self._pos.copy(), self._goal.copy()

    def achieved_goal(self, state: np.ndarray) -> np.ndarray:
        return np.asarray(state, dtype=np.float64)[:2].copy()

    def step(self, action: int) -> StepResult:
        if self._done:
            raise RuntimeError("step() after episode end; call reset()")
        action = int(action)
        if not 0 <= action < 9:
            raise ValueError(f"action {action} outside [0, 9)")
        target = self._pos + self.step_size * self.DIRECTIONS[action]
        # Snap to the step lattice so wall-line coordinate tests stay exact.
        target = np.round(target / self.step_size) * self.step_size
        target = np.clip(target, -ARENA_HALF, ARENA_HALF)
        if not self._move_blocked(self._pos, target):
            self._pos = target
        self._steps += 1
        reached = goal_reward(self._pos, self._goal, self.spec.epsilon) == 1.0
        self._done = reached or self._steps >= self.spec.horizon
        return StepResult(self._pos.copy(), self._pos.copy(), self._done)

    def _move_blocked(self, p: np.ndarray, q: np.ndarray) -> bool:
        if np.array_equal(p, q):
            return False
        return any(w.blocks(p, q) for w in self.walls)

    def clone(self) -> "FourRooms":
        return FourRooms(self.step_size, self.spec.epsilon, self.spec.horizon,
                         self.walls[0].doorways[0].halfwidth)

    def geometry(self) -> dict:
        """Renderable arena description for annotation clients."""
        return {
            "bounds": [[-ARENA_HALF, -ARENA_HALF], [ARENA_HALF, ARENA_HALF]],
            "walls": [
                {
                    "axis": "x" if w.axis == 0 else "y",
                    "at": w.at,
                    "gaps": [
                        {"center": d.center, "halfwidth": d.halfwidth}
                        for d in w.doorways
                    ],
                }
                for w in self.walls
            ],
            "start": self.START.tolist(),
            "goal": self.GOAL.tolist(),
        }


class PointPush:
    """Continuous substitute for the manipulation domains: a point agent pushes a puck.

    State is (agent_x, agent_y, puck_x, puck_y); the achieved goal is the puck
    position.  Actions are a 2-d box in [-1, 1], scaled to a maximum per-axis
    displacement of 0.05.  When the agent disk (radius 0.03) overlaps the puck
    disk (radius 0.04) after moving, the puck is pushed out along the contact
    normal.  Episode goals are drawn uniformly from a central box.
    """

    name = "point-push"

    AGENT_RADIUS = 0.03
    PUCK_RADIUS = 0.04
    MAX_DISP = 0.05
    GOAL_BOX = 0.25
    AGENT_START = np.array([-0.35, -0.35])
    PUCK_START = np.array([0.0, 0.0])

    def __init__(self, epsilon: float = CONTACT_EPS, horizon: int = HORIZON):
        self.spec = EnvSpec(
            state_dim=4,
            action_space=Box(2, -1.0, 1.0),
            goal_dim=2,
            epsilon=epsilon,
            horizon=horizon,
            goal_low=np.array([-ARENA_HALF, -ARENA_HALF]),
            goal_high=np.array([ARENA_HALF, ARENA_HALF]),
        )
        self._agent: Optional[np.ndarray] = None
        self._puck: Optional[np.ndarray] = None
        self._goal: Optional[np.ndarray] = None
        self._steps = 0
        self._done = True

    def reset(self, seed: Optional[int] = None):
        rng = np.random.default_rng(seed)
        self._agent = self.AGENT_START.copy()
        self._puck = self.PUCK_START.copy()
        self._goal = rng.uniform(-self.GOAL_BOX, self.GOAL_BOX, size=2)
        self._steps = 0
        self._done = False
        return self._state(), self._goal.copy()

    def _state(self) -> np.ndarray:
        return np.concatenate([self._agent, self._puck])

    def achieved_goal(self, state: np.ndarray) -> np.ndarray:
        return np.asarray(state, dtype=np.float64)[2:4].copy()

    def step(self, action) -> StepResult:
        if self._done:
            raise RuntimeError("step() after episode end; call reset()")
        a = np.asarray(action, dtype=np.float64)
        if a.shape != (2,):
            raise ValueError(f"action shape {a.shape}, expected (2,)")
        if np.any(np.abs(a) > 1.0 + 1e-9):
            raise ValueError(f"action {a} outside [-1, 1] box")
        self._agent = np.clip(self._agent + self.MAX_DISP * a, -ARENA_HALF, ARENA_HALF)
        contact = self.AGENT_RADIUS + self.PUCK_RADIUS
        delta = self._puck - self._agent
        dist = float(np.linalg.norm(delta))
        if dist < contact:
            normal = delta / dist if dist > 1e-12 else np.array([1.0, 0.0])
            self._puck = np.clip(self._agent + contact * normal, -ARENA_HALF, ARENA_HALF)
        self._steps += 1
        reached = goal_reward(self._puck, self._goal, self.spec.epsilon) == 1.0
        self._done = reached or self._steps >= self.spec.horizon
        return StepResult(self._state(), self._puck.copy(), self._done)

    def clone(self) -> "PointPush":
        return PointPush(self.spec.epsilon, self.spec.horizon)

    def geometry(self) -> dict:
        return {
            "bounds": [[-ARENA_HALF, -ARENA_HALF], [ARENA_HALF, ARENA_HALF]],
            "walls": [],
            "start": self.AGENT_START.tolist(),
            "goal": None,  # episode-specific
        }


ENV_KINDS = ("four-rooms", "point-push")


def make_env(kind: str, **overrides):
    """Environment factory keyed by the CLI/config string."""
    if kind == "four-rooms":
        return FourRooms(**overrides)
    if kind == "point-push":
        return PointPush(**overrides)
    raise ValueError(f"unknown environment {kind!r}; expected one of {ENV_KINDS}")
