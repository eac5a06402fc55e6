from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


WindowKind = Literal[
    "plateau_phi",
    "annulus_psi",
    "annulus_psi_tilde",
    "gauss_g",
    "gauss_h",
    "decay_theta",
    "mollifier_vartheta",
    "bump_tau",
    "spatial_eta",
    "spatial_eta_tilde",
]


class WindowExport(BaseModel):
    model_config = ConfigDict(extra="ignore")

    kind: WindowKind
    params: dict[str, float] = Field(default_factory=dict)
    lower: float
    upper: float
    nodes: list[float] = Field(default_factory=list)
    values: list[float] = Field(default_factory=list)
