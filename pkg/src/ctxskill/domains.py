"""Per-domain constants: parameter names, base values, training and sweep ranges."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import flappy, lander, lane
from .net import ArchSpec


@dataclass(frozen=True)
class Domain:
    name: str
    sensory_dim: int
    action_dim: int
    param_names: tuple[str, ...]
    base_params: tuple[float, ...]
    train_perturb: float
    n_episodes: int
    mu: int
    senses: tuple[str, str]
    sweep_perturb: float
    sweep_steps: int
    sweep_samples: int
    max_ticks: int

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def signs(self) -> np.ndarray:
        """Multiply natural objectives by this to get the all-minimize form."""
        return np.array([1.0 if s == "min" else -1.0 for s in self.senses])

    def arch(self, kind: str) -> ArchSpec:
        return ArchSpec(kind, self.sensory_dim, self.action_dim)

    def sweep_ranges(self, perturb: float | None = None) -> list[tuple[float, float]]:
        p = self.sweep_perturb if perturb is None else perturb
        out = []
        for b in self.base_params:
            lo, hi = b * (1 - p), b * (1 + p)
            out.append((min(lo, hi), max(lo, hi)))
        return out


DOMAINS = {
    "flappy": Domain("flappy", 6, 2, flappy.PARAM_NAMES, flappy.BASE_PARAMS, 0.2, 5, 96, ("min", "max"),
                     0.75, 10, 3, flappy.MAX_TICKS),
    "lander": Domain("lander", 8, 4, lander.PARAM_NAMES, lander.BASE_PARAMS, 0.1, 5, 96, ("max", "min"),
                     0.5, 20, 3, lander.MAX_TICKS),
    "lane": Domain("lane", 5, 2, lane.PARAM_NAMES, lane.BASE_PARAMS, 0.15, 6, 48, ("min", "min"),
                   0.35, 35, 1, lane.MAX_TICKS),
}


def get_domain(name: str) -> Domain:
    try:
        return DOMAINS[name]
    except KeyError:
        raise ValueError(f"unknown domain {name!r}; expected one of {sorted(DOMAINS)}") from None
