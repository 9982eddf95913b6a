"""The complete game: exit sets, control system and boundary payoff."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ControlSystem
from .geometry import BoundaryPayoff, DomainGeometry, SigmaExtension, extend_sigma


@dataclass(eq=False)
class GameSpec:
    geometry: DomainGeometry
    system: ControlSystem
    payoff: BoundaryPayoff
    name: str = ""
    _ext: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.geometry.dim != self.system.dim:
            raise ValueError("geometry and dynamics dimensions differ")
        self.payoff.validate(self.geometry.boundary_samples(1))
        rng = np.random.default_rng(0)
        box = self.geometry.box
        self.system.cost.validate(rng.uniform(box.lo, box.hi, size=(512, self.dim)))

    @property
    def dim(self) -> int:
        return self.geometry.dim

    @property
    def b(self) -> float:
        return self.system.b

    @property
    def lam(self) -> float:
        return self.system.lam

    def sigma_hat(self, eps: float = 0.0) -> SigmaExtension:
        key = float(eps)
        if key not in self._ext:
            self._ext[key] = extend_sigma(self.payoff, self.geometry, key)
        return self._ext[key]

    def sigma_tilde(self, x, eps: float = 0.0) -> np.ndarray:
        return self.sigma_hat(eps).tilde(x)
