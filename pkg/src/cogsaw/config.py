"""Service defaults with config-file and environment overrides.

Precedence: environment variable, then config file, then built-in
default. Environment keys are the field names upper-cased with a
COGSAW_ prefix (COGSAW_PHI, COGSAW_EPSILON, ...).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from typing import Mapping, Optional

ENV_PREFIX = "COGSAW_"


@dataclass(frozen=True)
class Settings:
    phi: float = 0.618
    epsilon: float = 0.02
    stagnation_period: float = 30.0
    erase_px: int = 2
    group_size: int = 4
    host: str = "127.0.0.1"
    port: int = 8750
    data_dir: str = "rounds"

    def __post_init__(self) -> None:
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError("phi must be in [0, 1]")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.stagnation_period <= 0:
            raise ValueError("stagnation_period must be positive")
        if self.erase_px < 0:
            raise ValueError("erase_px must be >= 0")
        if self.group_size < 1:
            raise ValueError("group_size must be >= 1")


def load_settings(path: Optional[str] = None,
                  env: Optional[Mapping[str, str]] = None) -> Settings:
    env = os.environ if env is None else env
    values = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - {f.name for f in fields(Settings)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(data)
    for f in fields(Settings):
        raw = env.get(ENV_PREFIX + f.name.upper())
        if raw is not None:
            values[f.name] = _parse(f.name, raw)
    return Settings(**values)


def _parse(name: str, raw: str):
    caster = {"phi": float, "epsilon": float, "stagnation_period": float,
              "erase_px": int, "group_size": int, "port": int}.get(name, str)
    return caster(raw)
