from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator


class SublevelReport(BaseModel):
    model_config = ConfigDict(extra="ignore")

    epsilons: list[float] = Field(default_factory=list)
    measures: list[float] = Field(default_factory=list)
    fitted_sigma: float = 0.0
    fitted_C: float = 0.0
    box_measure: float = 1.0

    @model_validator(mode="after")
    def _check_measures(self) -> "SublevelReport":
        if len(self.epsilons) != len(self.measures):
            raise ValueError("epsilons and measures must have equal length")
        if any(m < 0 or m > self.box_measure + 1e-12 for m in self.measures):
            raise ValueError("measures must lie in [0, |K|]")
        return self

    def is_monotone(self, slack: float = 1e-12) -> bool:
        ordered = sorted(zip(self.epsilons, self.measures))
        return all(b[1] >= a[1] - slack for a, b in zip(ordered, ordered[1:]))
