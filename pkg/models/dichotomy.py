from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict


DichotomyBranch = Literal["count_large", "increment_large", "neither"]


class DichotomyRecord(BaseModel):
    model_config = ConfigDict(extra="ignore")

    l: int
    k_l: int
    count_I: float
    increment: float
    count_threshold: float
    increment_threshold: float
    branch: DichotomyBranch
    truncated: bool = False
