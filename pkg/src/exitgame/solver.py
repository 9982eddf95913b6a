"""Semi-Lagrangian value iteration for the Kruzhkov-transformed Dirichlet problem.

At every interior node the update is

    u(x) <- min_p max_q [ e^{-g(x) h_t} u(x + h_t f(x,p,q)) + 1 - e^{-g(x) h_t} ]

with multilinear interpolation of ``u`` at the foot-point. Target nodes hold
the transformed boundary payoff, lifeline and box-edge nodes hold 1. Since
``g >= b > 0`` the update is a sup-norm contraction with factor
``exp(-b h_t)``; Gauss-Seidel sweeps inherit the same factor per sweep.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, replace

import numba
import numpy as np

from .geometry import kruzhkov_inv
from .grid import Grid, NodeClass, ValueField, classify, interpolate
from .scenario import GameSpec

logger = logging.getLogger(__name__)

# TBB is tried last: old system TBB builds make numba warn on every launch.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


class SolverError(RuntimeError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class SolverConfig:
    time_step: float | None = None
    residual_tol: float = 1e-9
    max_iters: int = 100_000
    mode: str = "gauss-seidel"
    # solve on successively halved grids first and start from the
    # interpolated coarse solution (only grids with >= 2 axes of >= 41 nodes)
    cascade: bool = True

    def __post_init__(self):
        if self.time_step is not None and not self.time_step > 0:
            raise ValueError("solver time_step must be > 0")
        if not self.residual_tol > 0:
            raise ValueError("solver residual_tol must be > 0")
        if self.mode not in ("gauss-seidel", "jacobi"):
            raise ValueError(f"unknown solver mode {self.mode!r}")


@dataclass
class SolveReport:
    iterations: int
    residual: float
    history: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    time_step: float = 0.0
    contraction_bound: float = 1.0
    sweeps_per_iteration: int = 1
    mode: str = "gauss-seidel"
    elapsed: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


# -- compiled kernel ---------------------------------------------------------


@numba.njit(cache=True)
def _interp(u, lo, h, shape, strides, y, w):
    d = y.shape[0]
    base = 0
    for a in range(d):
        t = (y[a] - lo[a]) / h[a]
        top = shape[a] - 1
        if t < -1e-9 or t > top + 1e-9:
            return 1.0
        if t < 0.0:
            t = 0.0
        elif t > top:
            t = top
        k = int(math.floor(t))
        if k > top - 1:
            k = top - 1
        w[a] = t - k
        base += k * strides[a]
    acc = 0.0
    for corner in range(1 << d):
        wt = 1.0
        off = 0
        for a in range(d):
            if (corner >> a) & 1:
                wt *= w[a]
                off += strides[a]
            else:
                wt *= 1.0 - w[a]
        if wt != 0.0:
            acc += wt * u[base + off]
    if acc < 0.0:
        return 0.0
    if acc > 1.0:
        return 1.0
    return acc


@numba.njit(cache=True)
def _update(i, u, X, AX, ctrl, gam, lo, h, shape, strides, ht, y, w, pbest, qbest):
    # Exhaustive min-max. The node's previous saddle pair is tried first so
    # that a p whose partial max already reaches the running min is cut.
    d = X.shape[1]
    n_p = ctrl.shape[0]
    n_q = ctrl.shape[1]
    best = np.inf
    p_arg = pbest[i]
    q_arg = qbest[i]
    for jp in range(n_p):
        p = (pbest[i] + jp) % n_p
        worst = -np.inf
        q_here = 0
        for jq in range(n_q):
            q = (qbest[i] + jq) % n_q
            for a in range(d):
                y[a] = X[i, a] + ht * (AX[i, a] + ctrl[p, q, a])
            v = _interp(u, lo, h, shape, strides, y, w)
            if v > worst:
                worst = v
                q_here = q
                if worst >= best:
                    break
        if worst < best:
            best = worst
            p_arg = p
            q_arg = q_here
    pbest[i] = p_arg
    qbest[i] = q_arg
    return gam[i] * best + (1.0 - gam[i])


@numba.njit(cache=True)
def _gs_sweep(order, u, X, AX, ctrl, gam, lo, h, shape, strides, ht, pbest, qbest):
    d = X.shape[1]
    y = np.empty(d)
    w = np.empty(d)
    inc = 0.0
    for j in range(order.shape[0]):
        i = order[j]
        new = _update(i, u, X, AX, ctrl, gam, lo, h, shape, strides, ht, y, w, pbest, qbest)
        diff = abs(new - u[i])
        if diff > inc:
            inc = diff
        u[i] = new
    return inc


@numba.njit(cache=True, parallel=True)
def _jacobi(nodes, u, out, X, AX, ctrl, gam, lo, h, shape, strides, ht, pbest, qbest):
    d = X.shape[1]
    for j in numba.prange(nodes.shape[0]):
        y = np.empty(d)
        w = np.empty(d)
        i = nodes[j]
        out[i] = _update(i, u, X, AX, ctrl, gam, lo, h, shape, strides, ht, y, w, pbest, qbest)


# -- driver ------------------------------------------------------------------


@dataclass(eq=False)
class _Problem:
    grid: Grid
    classes: np.ndarray
    X: np.ndarray
    AX: np.ndarray
    ctrl: np.ndarray
    gam: np.ndarray
    ht: float
    interior: np.ndarray
    pbest: np.ndarray = None
    qbest: np.ndarray = None

    def __post_init__(self):
        self.pbest = np.zeros(self.grid.size, dtype=np.int64)
        self.qbest = np.zeros(self.grid.size, dtype=np.int64)

    def kernel_args(self):
        g = self.grid
        return (self.X, self.AX, self.ctrl, self.gam, np.asarray(g.lo), g.h,
                np.asarray(g.shape, dtype=np.int64), g.strides, self.ht,
                self.pbest, self.qbest)


def default_time_step(spec: GameSpec, grid: Grid) -> float:
    """Grid spacing over the largest speed, so foot-points stay within a cell."""
    vmax = spec.system.max_speed(grid.coords())
    hmin = float(np.min(grid.h))
    return hmin / vmax if vmax > 0 else hmin


def _prepare(spec: GameSpec, grid: Grid, cfg: SolverConfig, classes=None) -> _Problem:
    if grid.dim != spec.dim:
        raise SolverError("grid and scenario dimensions differ")
    X = grid.coords()
    if classes is None:
        classes = classify(grid, spec.geometry)
    sysm = spec.system
    with np.errstate(invalid="ignore", over="ignore"):
        AX = X @ sysm.dynamics.A.T
    ctrl = sysm.dynamics.control_part(sysm.P, sysm.Q)
    bad = ~np.all(np.isfinite(AX), axis=1)
    if bad.any() or not np.all(np.isfinite(ctrl)):
        k = int(np.argmax(bad)) if bad.any() else 0
        raise SolverError(f"non-finite dynamics at node {k} x={X[k].tolist()}")
    ht = cfg.time_step if cfg.time_step is not None else default_time_step(spec, grid)
    gvals = sysm.cost(X)
    if not np.all(np.isfinite(gvals)):
        k = int(np.argmax(~np.isfinite(gvals)))
        raise SolverError(f"non-finite running cost at node {k} x={X[k].tolist()}")
    gam = np.exp(-gvals * ht)
    interior = np.flatnonzero(classes == NodeClass.INTERIOR)
    return _Problem(grid, classes, X, AX, np.ascontiguousarray(ctrl), gam, float(ht), interior)


def boundary_values(spec: GameSpec, grid: Grid, classes: np.ndarray) -> np.ndarray:
    u = np.ones(grid.size)
    tgt = classes == NodeClass.TARGET
    if tgt.any():
        u[tgt] = spec.sigma_tilde(grid.coords()[tgt], 0.0)
    return u


def sweep_orders(grid: Grid, nodes: np.ndarray) -> list[np.ndarray]:
    """The 2^d lexicographic node orderings with every combination of axis directions."""
    idx = grid.multi_index(nodes)
    orders = []
    for signs in range(1 << grid.dim):
        keys = [idx[:, a] * (-1 if (signs >> a) & 1 else 1) for a in range(grid.dim)]
        # np.lexsort sorts by the last key first
        orders.append(nodes[np.lexsort(keys[::-1])].astype(np.int64))
    return orders


def coarsen(grid: Grid) -> Grid | None:
    """Every other node of ``grid``; None when the grid is too small or even-sized."""
    if any(n < 41 or n % 2 == 0 for n in grid.shape):
        return None
    return Grid(grid.lo, grid.hi, tuple((n + 1) // 2 for n in grid.shape))


def solve(spec: GameSpec, grid: Grid, cfg: SolverConfig | None = None,
          initial: ValueField | None = None) -> tuple[ValueField, SolveReport]:
    """Iterate the scheme to a fixed point.

    ``initial`` (any field, interpolated) seeds the interior nodes. The fixed
    point does not depend on it; only the iteration count does.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    prob = _prepare(spec, grid, cfg)
    u = boundary_values(spec, grid, prob.classes)
    if initial is None and cfg.cascade and grid.dim > 1:
        coarse = coarsen(grid)
        if coarse is not None:
            initial, _ = solve(spec, coarse, replace(cfg, residual_tol=max(cfg.residual_tol, 1e-6)))
    if initial is not None:
        inner = prob.interior
        u[inner] = interpolate(initial, prob.X[inner])
    args = prob.kernel_args()
    nodes = prob.interior.astype(np.int64)
    history: list[float] = []
    gs = cfg.mode == "gauss-seidel"
    orders = sweep_orders(grid, nodes) if gs else []
    n_sweeps = len(orders) if gs else 1
    it = 0
    if len(nodes):
        while True:
            if it >= cfg.max_iters:
                raise ConvergenceError(
                    f"no convergence in {cfg.max_iters} iterations (residual {history[-1]:.3g})",
                    history[-1],
                )
            if gs:
                prev = u.copy()
                for order in orders:
                    _gs_sweep(order, u, *args)
                # one iteration is a full cycle of sweep orderings
                inc = float(np.max(np.abs(u[nodes] - prev[nodes])))
            else:
                out = u.copy()
                _jacobi(nodes, u, out, *args)
                inc = float(np.max(np.abs(out - u)))
                u = out
            history.append(inc)
            it += 1
            if inc <= cfg.residual_tol:
                break
    ratios = [history[k + 1] / history[k] for k in range(len(history) - 1) if history[k] > 0]
    vf = ValueField(grid, u, prob.classes, {"time_step": prob.ht, "scenario": spec.name})
    final = residual(vf, spec, cfg, _prob=prob)
    vf.meta["residual"] = final
    report = SolveReport(
        iterations=it,
        residual=final,
        history=history,
        ratios=ratios,
        time_step=prob.ht,
        contraction_bound=math.exp(-spec.b * prob.ht),
        sweeps_per_iteration=n_sweeps,
        mode=cfg.mode,
        elapsed=time.perf_counter() - t0,
    )
    logger.info("solve %s: %d iterations, residual %.3g", spec.name, it, final)
    return vf, report


def apply_update(vf: ValueField, spec: GameSpec, cfg: SolverConfig | None = None, _prob=None) -> np.ndarray:
    """One simultaneous (Jacobi) application of the update to ``vf``."""
    cfg = cfg or SolverConfig(time_step=vf.meta.get("time_step"))
    prob = _prob or _prepare(spec, vf.grid, cfg, vf.classes)
    u = np.array(vf.u, dtype=float)
    out = u.copy()
    _jacobi(prob.interior.astype(np.int64), u, out, *prob.kernel_args())
    return out


def residual(vf: ValueField, spec: GameSpec, cfg: SolverConfig | None = None, _prob=None) -> float:
    """Sup over interior nodes of the defect of a single update."""
    cfg = cfg or SolverConfig(time_step=vf.meta.get("time_step"))
    prob = _prob or _prepare(spec, vf.grid, cfg, vf.classes)
    if len(prob.interior) == 0:
        return 0.0
    out = apply_update(vf, spec, cfg, _prob=prob)
    return float(np.max(np.abs(out[prob.interior] - vf.u[prob.interior])))


def extract_phi(vf: ValueField) -> np.ndarray:
    """Untransformed value ``-ln(1 - u)``; ``inf`` where ``u == 1``."""
    return kruzhkov_inv(np.clip(vf.u, 0.0, 1.0))
