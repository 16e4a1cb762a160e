"""Preset parameter sets for the four benchmark runs (a)-(d).

All share g = 0.2, lambda = 0.1, N0 = 1000 and start from
x = p = phi = 0, z = 0.95, q = 1; they differ only in their losses.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

from .exceptions import DomainError
from .model import State, SystemParams

DEFAULT_T_END = 200.0


@dataclass(frozen=True)
class Scenario:
    name: str
    params: SystemParams
    initial: State
    t_end: float = DEFAULT_T_END
    description: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "params": self.params.to_dict(),
                "initial": self.initial.to_dict(), "t_end": self.t_end,
                "description": self.description}


_BASE = SystemParams(g=0.2, lam=0.1, n0=1000.0)
_INITIAL = State(x=0.0, p=0.0, z=0.95, phi=0.0, q=1.0)

SCENARIOS: Dict[str, Scenario] = {
    "fig3a": Scenario("fig3a", _BASE, _INITIAL,
                      description="lossless; chaotic tunnelling instead of self-trapping"),
    "fig3b": Scenario("fig3b", _BASE.replace(gamma=0.01), _INITIAL,
                      description="membrane damping only; settles on a self-trapped attractor"),
    "fig3c": Scenario("fig3c", _BASE.replace(gamma=0.01, kappa=0.02), _INITIAL,
                      description="photon loss at zero temperature; everything decays"),
    "fig3d": Scenario("fig3d", _BASE.replace(gamma=0.01, kappa=0.02, n_th=200.0), _INITIAL,
                      description="photon loss with thermal pumping; q relaxes to 2 N_th / N0 = 0.4"),
}


def get_scenario(name: str) -> Scenario:
    try:
        return SCENARIOS[name]
    except KeyError:
        raise DomainError(f"scenario: unknown preset {name!r}; "
                          f"expected one of {', '.join(SCENARIOS)}") from None
