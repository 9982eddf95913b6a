"""Inf- and sup-convolutions of a grid value field.

With the kernel

    w_a(x, y) = (a^{2/nu} + |x - y|^2)^nu / a,   nu = 1 / (2 + 2 lam),

the first player's field is ``u_a(x) = min_y [u(y) + w_a(x, y)]`` and the
second player's is ``v_a(x) = max_y [u_n(y) - w_a(x, y)]``, ``u_n`` being a
subsolution (by default the solved field itself). Both searches run over
grid nodes only; the minimiser ``y_a(x)`` and the shift covector

    s_a(x) = D_x w_a(x, y_a(x))      (INF)
    s_a(x) = -D_x w_a(x, y_a(x))     (SUP)

are stored per node for the extremal-shift strategies.

Note that ``w_a`` has slope about ``1/a`` away from the diagonal, so where
``u`` varies slower than that the grid minimiser is ``x`` itself and the
shift vanishes.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import ControlSystem, hamiltonian_H
from .grid import Grid, ValueField

TOL_KERNEL_INEQ = 1e-8


class MollifierError(ValueError):
    pass


class Mode(enum.Enum):
    INF = "inf"
    SUP = "sup"


@dataclass(frozen=True)
class Kernel:
    alpha: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise MollifierError(f"alpha must be > 0, got {self.alpha}")
        if self.lam < 0:
            raise MollifierError("lambda must be >= 0")

    @property
    def nu(self) -> float:
        return 1.0 / (2.0 + 2.0 * self.lam)

    @property
    def floor(self) -> float:
        """``alpha^{2/nu}``, the smoothing term at the diagonal."""
        return self.alpha ** (2.0 / self.nu)

    def alpha0(self, b: float) -> float:
        """Largest alpha for which the kernel inequality is claimed (b / lambda)."""
        return math.inf if self.lam == 0 else b / self.lam

    def of_r2(self, r2):
        r2 = np.asarray(r2, float)
        # w(x, x) = alpha exactly, not up to rounding of the power
        return np.where(r2 == 0, self.alpha, (self.floor + r2) ** self.nu / self.alpha)


def w_alpha(kernel: Kernel, x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    r2 = np.sum((x - y) ** 2, axis=-1)
    out = kernel.of_r2(r2)
    return float(out) if np.ndim(out) == 0 else out


def grad_w_alpha(kernel: Kernel, x, y) -> np.ndarray:
    """``D_x w_a(x, y)``; ``D_y w_a`` is exactly its negative."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    d = x - y
    r2 = np.sum(d**2, axis=-1, keepdims=True)
    nu, a = kernel.nu, kernel.alpha
    return (2.0 * nu / a) * (kernel.floor + r2) ** (nu - 1.0) * d


def search_radius(alpha: float) -> float:
    # twice the proven bound on |x - y_a| with a 1.5 safety factor, capped at 1
    return min(3.0 * alpha, 1.0)


@dataclass(eq=False)
class MollifiedField:
    base: ValueField
    kernel: Kernel
    mode: Mode
    values: np.ndarray
    foot: np.ndarray
    shift: np.ndarray
    source: ValueField

    @property
    def grid(self) -> Grid:
        return self.base.grid

    def foot_distance(self) -> np.ndarray:
        return np.linalg.norm(self.grid.coords() - self.foot, axis=1)

    def bound_violations(self) -> int:
        """Nodes whose foot-point is farther than ``2 alpha`` (reported, never clamped)."""
        return int(np.sum(self.foot_distance() > 2 * self.kernel.alpha * (1 + 1e-12)))

    def node_of(self, x) -> int:
        return int(self.grid.nearest_index(np.asarray(x, float)))

    def shift_at(self, x) -> np.ndarray:
        return self.shift[self.node_of(x)]

    def write_csv(self, path) -> None:
        g = self.grid
        d = g.dim
        buf = io.StringIO()
        cols = ([f"x{a}" for a in range(d)] + ["value"] + [f"y{a}" for a in range(d)]
                + [f"s{a}" for a in range(d)])
        buf.write(",".join(cols) + "\n")
        rows = np.column_stack([g.coords(), self.values, self.foot, self.shift])
        for row in rows:
            buf.write(",".join(format(v, ".17g") for v in row) + "\n")
        Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _offsets(grid: Grid, radius: float) -> np.ndarray:
    """Integer node offsets within ``radius``, ordered by flat offset."""
    h = grid.h
    reach = [int(math.floor(radius / hk + 1e-9)) for hk in h]
    mesh = np.meshgrid(*[np.arange(-r, r + 1) for r in reach], indexing="ij")
    offs = np.stack([m.ravel() for m in mesh], axis=1)
    keep = np.sum((offs * h) ** 2, axis=1) <= radius**2 * (1 + 1e-12)
    offs = offs[keep]
    return offs[np.argsort(offs @ grid.strides, kind="stable")]


def build(base: ValueField, kernel: Kernel, mode: Mode | str = Mode.INF,
          natural: ValueField | None = None) -> MollifiedField:
    """Node-wise inf-convolution (INF) or sup-convolution (SUP) of a field.

    For SUP the convolved field is ``natural`` (the subsolution), defaulting
    to ``base``. Candidates are grid nodes within ``search_radius``; nodes
    beyond the box take the box-edge value 1. Ties go to the smallest node
    index.
    """
    mode = Mode(mode)
    src = natural if (mode is Mode.SUP and natural is not None) else base
    if src.grid != base.grid:
        raise MollifierError("the subsolution must live on the solved grid")
    g = base.grid
    radius = search_radius(kernel.alpha)
    extent = np.subtract(g.hi, g.lo)
    if np.any(radius > extent):
        raise MollifierError(f"search radius {radius:.4g} exceeds the box extent {extent.tolist()}")
    idx = g.multi_index(np.arange(g.size))
    shape = np.asarray(g.shape)
    h = g.h
    u = np.asarray(src.u, float)
    sign = 1.0 if mode is Mode.INF else -1.0

    best = np.full(g.size, np.inf)
    arg = np.zeros((g.size, g.dim), dtype=np.int64)
    for off in _offsets(g, radius):
        tgt = idx + off
        inside = np.all((tgt >= 0) & (tgt < shape), axis=1)
        vals = np.ones(g.size)
        vals[inside] = u[tgt[inside] @ g.strides]
        w = float(kernel.of_r2(np.sum((off * h) ** 2)))
        # minimise u + w (INF) or -(u - w) (SUP)
        cand = sign * vals + w
        better = cand < best
        best[better] = cand[better]
        arg[better] = off
    X = g.coords()
    foot = X + arg * h
    values = sign * best
    grad = grad_w_alpha(kernel, X, foot)
    shift = grad if mode is Mode.INF else -grad
    return MollifiedField(base, kernel, mode, values, foot, shift, src)


# -- kernel inequality spot check ---------------------------------------------


@dataclass
class KernelInequalityReport:
    alpha: float
    alpha0: float
    compliant: bool
    n_samples: int
    max_violation: float
    worst: dict
    tol: float
    passed: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def kernel_inequality_samples(box_lo, box_hi, n: int, seed: int = 0):
    """``n`` triples ``(x, y, z)``: x uniform in the box, |x - y| <= 1, z in [0, 1]."""
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(box_lo, float), np.asarray(box_hi, float)
    d = len(lo)
    x = rng.uniform(lo, hi, size=(n, d))
    v = rng.normal(size=(n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = rng.uniform(0, 1, size=(n, 1)) ** (1.0 / d)
    return x, x + r * v, rng.uniform(0, 1, size=n)


def kernel_inequality_check(kernel: Kernel, system: ControlSystem, samples,
                            tol: float = TOL_KERNEL_INEQ) -> KernelInequalityReport:
    """Max over samples of ``H(x, D_x w, z) - H(y, -D_y w, z) - b w(x, y)``.

    Report only: with alpha above ``b / lambda`` violations are expected.
    """
    x, y, z = (np.asarray(a, float) for a in samples)
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    if np.any(np.linalg.norm(x - y, axis=1) > 1 + 1e-12):
        raise MollifierError("kernel inequality samples need |x - y| <= 1")
    s = grad_w_alpha(kernel, x, y)
    dy = -s  # D_y w
    lhs = (hamiltonian_H(system, x, s, z) - hamiltonian_H(system, y, -dy, z)
           - system.b * w_alpha(kernel, x, y))
    lhs = np.atleast_1d(lhs)
    k = int(np.argmax(lhs))
    a0 = kernel.alpha0(system.b)
    worst = {"x": x[k].tolist(), "y": y[k].tolist(), "z": float(np.atleast_1d(z)[k]),
             "lhs": float(lhs[k])}
    return KernelInequalityReport(kernel.alpha, a0, kernel.alpha <= a0, len(lhs), float(lhs[k]),
                                  worst, tol, bool(lhs[k] <= tol))
