from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class RectanglePayload(BaseModel):
    model_config = ConfigDict(extra="ignore")

    k: int
    i1: int
    i2: int


class TreePayload(BaseModel):
    model_config = ConfigDict(extra="ignore")

    alpha: int = 1
    beta: int = 2
    root: RectanglePayload | None = None
    rects: list[RectanglePayload] = Field(default_factory=list)
