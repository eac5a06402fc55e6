from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field


class GridPayload(BaseModel):
    """Serialized grid function: row-major samples, ``re[i * n + j]`` at (i/n, j/n)."""

    model_config = ConfigDict(extra="ignore")

    n: int
    re: list[float] = Field(default_factory=list)
    im: list[float] = Field(default_factory=list)
