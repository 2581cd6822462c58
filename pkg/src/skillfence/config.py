"""Run configuration: one dataclass, loadable from a JSON or TOML file.

Every CLI flag mirrors a config key so runs are reproducible from a single
file.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

try:  # tomllib ships with 3.11+; JSON config always works
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    tomllib = None


@dataclass(frozen=True)
class Config:
    oracle: str = "rule"  # rule | remote | transcript:<path>
    seed: int = 0
    max_chains: int = 64
    max_depth: int = 128
    context_radius: int = 2
    jaccard_threshold: float = 0.9
    summary_budget: int = 400  # chars of instruction text kept in the profile
    core_eq_ordered: bool = True  # require order-preserving trace equivalence
    max_driver_steps: int = 512
    constrain: bool = False

    def replace(self, **kwargs) -> "Config":
        return dataclasses.replace(self, **kwargs)


def load_config(path: str | Path) -> Config:
    """Load a Config from a .json or .toml file; unknown keys are rejected."""
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix == ".toml":
        if tomllib is None:
            raise RuntimeError("TOML config requires Python 3.11+; use JSON")
        data = tomllib.loads(raw.decode("utf-8"))
    else:
        data = json.loads(raw.decode("utf-8"))
    known = {f.name for f in dataclasses.fields(Config)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return Config(**data)
