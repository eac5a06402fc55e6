from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


FormKind = Literal["lambda_uv", "theta1", "theta2", "xi", "bark"]


class FormReport(BaseModel):
    model_config = ConfigDict(extra="ignore")

    kind: FormKind
    params: dict[str, float] = Field(default_factory=dict)
    value_re: float
    value_im: float
    quad: dict[str, int] = Field(default_factory=dict)

    @property
    def value(self) -> complex:
        return complex(self.value_re, self.value_im)
