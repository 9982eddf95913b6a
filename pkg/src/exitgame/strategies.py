"""Extremal-shift feedback strategies over mollified fields.

The first player aims against the inf-convolution, ``U(x) = p0(x, s(x))``;
the second against the sup-convolution, ``V(x) = q0(x, s(x))``. The shift
``s`` at an arbitrary state is read from the nearest grid node unless
``exact`` is set, in which case the node search is redone at the state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import ControlSystem, _inner, p0_index, q0_index
from .grid import ValueField
from .mollifier import Kernel, MollifiedField, Mode, build, grad_w_alpha, search_radius


class StrategyError(ValueError):
    pass


class Player(enum.Enum):
    FIRST = "first"
    SECOND = "second"

    @property
    def mode(self) -> Mode:
        return Mode.INF if self is Player.FIRST else Mode.SUP


@dataclass(eq=False)
class FeedbackStrategy:
    player: Player
    field: MollifiedField
    system: ControlSystem
    exact: bool = False
    debug: bool = False

    def __post_init__(self):
        self.player = Player(self.player)
        if self.field.mode is not self.player.mode:
            raise StrategyError(f"{self.player.value} player needs a {self.player.mode.value}-convolution")
        g = self.field.grid
        self._lo = np.asarray(g.lo)
        self._hi = np.asarray(g.hi)

    @property
    def controls(self) -> np.ndarray:
        return (self.system.P if self.player is Player.FIRST else self.system.Q).points

    def shift(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        if np.any(x < self._lo - 1e-9) or np.any(x > self._hi + 1e-9):
            raise StrategyError(f"state {x.tolist()} is outside the box; stop the motion at exit")
        if self.exact:
            return _exact_shift(self.field, x)
        return self.field.shift_at(x)

    def act_index(self, x) -> int:
        s = self.shift(x)
        if self.player is Player.FIRST:
            k = p0_index(self.system, x, s)
            if self.debug:
                table = _inner(self.system, np.asarray(x, float), s)
                if table[k].max() > table.max(axis=1).min() + 1e-12 * (1 + abs(table).max()):
                    raise AssertionError("p0 is not a min-max control")
            return k
        k = q0_index(self.system, x, s)
        if self.debug:
            table = _inner(self.system, np.asarray(x, float), s)
            if table[:, k].min() < table.min(axis=0).max() - 1e-12 * (1 + abs(table).max()):
                raise AssertionError("q0 is not a max-min control")
        return k

    def act(self, x) -> np.ndarray:
        return self.controls[self.act_index(x)]


def _exact_shift(field: MollifiedField, x: np.ndarray) -> np.ndarray:
    """Redo the node search at an arbitrary state."""
    g = field.grid
    k = field.kernel
    r = search_radius(k.alpha)
    X = g.coords()
    near = np.flatnonzero(np.sum((X - x) ** 2, axis=1) <= r * r)
    w = k.of_r2(np.sum((X[near] - x) ** 2, axis=1))
    u = field.source.u[near]
    if field.mode is Mode.INF:
        y = X[near[int(np.argmin(u + w))]]
        return grad_w_alpha(k, x, y)
    y = X[near[int(np.argmax(u - w))]]
    return -grad_w_alpha(k, x, y)


def first_player(base: ValueField, system: ControlSystem, alpha: float, **kw) -> FeedbackStrategy:
    field = build(base, Kernel(alpha, system.lam), Mode.INF)
    return FeedbackStrategy(Player.FIRST, field, system, **kw)


def second_player(base: ValueField, system: ControlSystem, alpha: float,
                  natural: ValueField | None = None, **kw) -> FeedbackStrategy:
    field = build(base, Kernel(alpha, system.lam), Mode.SUP, natural)
    return FeedbackStrategy(Player.SECOND, field, system, **kw)


def act(strategy: FeedbackStrategy, x) -> np.ndarray:
    return strategy.act(x)
