from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


Command = Literal[
    "norm-estimate",
    "decay-fit",
    "telescope-check",
    "sublevel-fit",
    "pattern-search",
    "dichotomy",
    "lower-bound-sweep",
    "identity-suite",
]

NormOperator = Literal[
    "truncated_t",
    "maximal",
    "bht_curvature",
    "sw_maximal",
    "cone_paraproduct",
    "shifted_maximal",
    "domination",
]

COMMANDS: tuple[str, ...] = Command.__args__

DEFAULT_EPSILONS = [2.0**-k for k in range(1, 9)]


def _power_of_two(value: int) -> int:
    if value < 4 or value & (value - 1):
        raise ValueError(f"grid size must be a power of two >= 4, got {value}")
    return value


class RunConfig(BaseModel):
    """Every parameter a command reads. Defaults are part of the report contract; do not change them."""

    model_config = ConfigDict(extra="forbid")

    command: Command
    n: int = 32
    seed: int = 1
    out: str | None = None
    max_workers: int = 1

    # singular operators
    nodes_per_shell: int = 32
    trials: int = 20
    operator: NormOperator = "truncated_t"
    sizes: list[int] = Field(default_factory=list)
    sigmas: list[float] = Field(default_factory=lambda: [0.0] + [2.0**k for k in range(9)])
    kappas: list[int] = Field(default_factory=lambda: [1, 2, 3])

    # decay fit; None means powers of two from 4 up to n/4
    lambdas: list[float] | None = None
    control: bool = False

    # sublevel fit
    epsilons: list[float] = Field(default_factory=lambda: list(DEFAULT_EPSILONS))

    # patterns
    k0: int = 1
    m_factor: int = 2
    max_iter: int = 4
    threshold_c: float = 1.0
    t_min: float | None = None
    bitmap: str | None = None
    density: float = 0.3

    # trees and forms
    alpha: int = 1
    beta: int = 2
    lam: float = 1.0
    r: float = 0.0
    depth: int = 2
    trees: int = 10
    refinements: list[int] = Field(default_factory=lambda: [1, 2])
    form_space_nodes: int = 16
    form_t_nodes: int = 32

    @field_validator("n")
    @classmethod
    def _grid_size(cls, value: int) -> int:
        return _power_of_two(value)

    @field_validator("sizes")
    @classmethod
    def _sizes(cls, value: list[int]) -> list[int]:
        return [_power_of_two(size) for size in value]

    @field_validator(
        "trials", "trees", "max_workers", "max_iter", "nodes_per_shell", "form_space_nodes", "form_t_nodes"
    )
    @classmethod
    def _positive_count(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"must be at least 1, got {value}")
        return value

    @field_validator("alpha", "beta")
    @classmethod
    def _exponent(cls, value: int) -> int:
        if value < 1:
            raise ValueError(f"scaling exponent must be a positive integer, got {value}")
        return value

    @field_validator("lambdas", "epsilons")
    @classmethod
    def _positive_list(cls, value: list[float] | None) -> list[float] | None:
        if value is None:
            return value
        if not value:
            raise ValueError("must not be empty")
        if any(not v > 0 for v in value):
            raise ValueError(f"entries must be positive, got {value}")
        return value

    @field_validator("refinements")
    @classmethod
    def _refinements(cls, value: list[int]) -> list[int]:
        if not value or any(v < 1 for v in value):
            raise ValueError(f"refinement factors must be positive integers, got {value}")
        return value

    @field_validator("sigmas")
    @classmethod
    def _sigmas(cls, value: list[float]) -> list[float]:
        if not value or any(v < 0 for v in value):
            raise ValueError(f"shifts must be non-negative, got {value}")
        return value

    @field_validator("kappas")
    @classmethod
    def _kappas(cls, value: list[int]) -> list[int]:
        if not value or any(k < 1 for k in value):
            raise ValueError(f"kappas must be positive integers, got {value}")
        return value

    @model_validator(mode="after")
    def _ranges(self) -> RunConfig:
        if not 0.0 < self.density <= 1.0:
            raise ValueError(f"density must lie in (0, 1], got {self.density}")
        if self.threshold_c <= 0:
            raise ValueError(f"threshold_c must be positive, got {self.threshold_c}")
        if self.depth < 0:
            raise ValueError(f"depth must be non-negative, got {self.depth}")
        return self

    @property
    def grid_sizes(self) -> list[int]:
        return list(self.sizes) or [self.n]

    @property
    def decay_lambdas(self) -> list[float]:
        if self.lambdas is not None:
            return list(self.lambdas)
        top = self.n // 4
        return [float(2**k) for k in range(2, top.bit_length()) if 2**k <= top]

    @classmethod
    def resolve(
        cls,
        defaults: dict[str, Any],
        file_data: dict[str, Any] | None,
        flags: dict[str, Any],
    ) -> RunConfig:
        """Merge settings defaults < config file < explicit flags (None flags are ignored)."""
        merged: dict[str, Any] = dict(defaults)
        merged.update(file_data or {})
        merged.update({key: value for key, value in flags.items() if value is not None})
        return cls.model_validate(merged)
