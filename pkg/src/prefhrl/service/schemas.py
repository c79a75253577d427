"""Wire schemas of the annotation API (version 1)."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, field_validator

API_VERSION = "1"


class TupleView(BaseModel):
    state: list[float]
    subgoal: list[float]


class WallGap(BaseModel):
    center: float
    halfwidth: float


class WallView(BaseModel):
    axis: str  # "x" for a wall on x == at, "y" for y == at
    at: float
    gaps: list[WallGap]


class GeometryView(BaseModel):
    bounds: list[list[float]] = []
    walls: list[WallView] = []
    start: Optional[list[float]] = None
    goal: Optional[list[float]] = None


class WireQuery(BaseModel):
    id: str
    env: str
    left: TupleView
    right: TupleView
    goal: list[float]
    geometry: GeometryView
    created_episode: int


class LabelBody(BaseModel):
    v: float

    @field_validator("v")
    @classmethod
    def _label_domain(cls, v: float) -> float:
        if v not in (0.0, 0.5, 1.0):
            raise ValueError("label must be 0, 0.5 or 1")
        return v


class LabelResult(BaseModel):
    id: str
    status: str  # "accepted" | "already_labeled"


class StatusView(BaseModel):
    version: str = API_VERSION
    pending: int
    episode: int
    k: float
    alpha: float
    subgoal_success_rate: float
    labels_total: int
