from __future__ import annotations

import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any

from dotenv import load_dotenv


load_dotenv()

LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR"}


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        return int(value)
    except ValueError:
        return default


def _env_str(name: str, default: str) -> str:
    value = os.getenv(name)
    return default if value is None or value.strip() == "" else value.strip()


@dataclass(frozen=True)
class Settings:
    reports_dir: Path
    default_n: int
    default_seed: int
    nodes_per_shell: int
    max_workers: int
    log_level: str
    form_space_nodes: int
    form_t_nodes: int

    def run_defaults(self) -> dict[str, Any]:
        """Keys of RunConfig that the environment may preset."""
        return {
            "n": self.default_n,
            "seed": self.default_seed,
            "nodes_per_shell": self.nodes_per_shell,
            "max_workers": self.max_workers,
            "form_space_nodes": self.form_space_nodes,
            "form_t_nodes": self.form_t_nodes,
        }


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    log_level = _env_str("LAB_LOG_LEVEL", "INFO").upper()
    return Settings(
        reports_dir=Path(_env_str("LAB_REPORTS_DIR", "./data/reports")),
        default_n=_env_int("LAB_DEFAULT_N", 32),
        default_seed=_env_int("LAB_DEFAULT_SEED", 1),
        nodes_per_shell=_env_int("LAB_NODES_PER_SHELL", 32),
        max_workers=max(1, _env_int("LAB_MAX_WORKERS", 4)),
        log_level=log_level if log_level in LOG_LEVELS else "INFO",
        form_space_nodes=_env_int("LAB_FORM_SPACE_NODES", 16),
        form_t_nodes=_env_int("LAB_FORM_T_NODES", 32),
    )
