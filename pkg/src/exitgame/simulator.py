"""Step-by-step motions, exit-time detection and guarantee estimates.

A motion runs on a uniform partition of ``[0, theta]``. A strategy that is
synchronised with the partition freezes its control at the partition
nodes; opponents may switch on a sub-partition ``kappa_sub`` times finer.
Between switches the state is advanced by classical RK4. The motion stops at
the first time the state comes within ``eps`` of the target or the lifeline
(located by bisection), when it leaves the computational box, or at the
horizon.

The guarantees are extrema over all measurable opponent controls; here they
are approximated by a finite opponent ensemble, so ``estimate_J1`` is a lower
bound of the first player's guarantee and ``estimate_J2`` an upper bound of
the second's.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import TOL_GEOM, kruzhkov_inv
from .scenario import GameSpec
from .strategies import FeedbackStrategy, Player, first_player, second_player

TOL_EVENT = 1e-9
KAPPA_SUB = 4
BRUTE_FORCE_LIMIT = 2_000_000


class SimulationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, float)
        if t.ndim != 1 or len(t) < 2 or t[0] != 0.0:
            raise SimulationError("a partition starts at 0 and has at least two nodes")
        if np.any(np.diff(t) <= 0):
            raise SimulationError("partition times must increase strictly")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, diam: float, theta: float) -> "Partition":
        if not diam > 0 or not theta > 0:
            raise SimulationError("partition diameter and horizon must be > 0")
        n = int(math.ceil(theta / diam - 1e-12))
        return cls(diam * np.arange(n + 1))

    @property
    def diam(self) -> float:
        return float(np.max(np.diff(self.times)))

    @property
    def min_step(self) -> float:
        return float(np.min(np.diff(self.times)))


# -- control policies ----------------------------------------------------------


class Policy:
    """Chooses a control index; ``sync`` says when it may switch."""

    label = "policy"
    sync = "sub"

    def index(self, x: np.ndarray) -> int:
        raise NotImplementedError


@dataclass(eq=False)
class StrategyPolicy(Policy):
    strategy: FeedbackStrategy
    sync: str = "partition"

    @property
    def label(self):
        return f"extremal-shift/{self.sync}"

    def index(self, x):
        return self.strategy.act_index(x)


@dataclass(eq=False)
class RandomPolicy(Policy):
    n: int
    rng: np.random.Generator
    tag: int = 0
    sync: str = "sub"

    @property
    def label(self):
        return f"random/{self.tag}"

    def index(self, x):
        return int(self.rng.integers(self.n))


@dataclass(eq=False)
class ConstantPolicy(Policy):
    k: int
    sync: str = "partition"

    @property
    def label(self):
        return f"constant/{self.k}"

    def index(self, x):
        return self.k


# -- motions -----------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    p_idx: np.ndarray
    q_idx: np.ndarray
    tau: float
    hit_set: str
    t_hat: dict
    payoff: float
    running: float
    label: str = ""

    def records(self, P: np.ndarray, Q: np.ndarray):
        for t, x, i, j in zip(self.times, self.states, self.p_idx, self.q_idx):
            yield {"rollout": self.label, "t": float(t), "x": x.tolist(),
                   "p": P[i].tolist(), "q": Q[j].tolist()}


def _rk4(A, v, x, h):
    k1 = A @ x + v
    k2 = A @ (x + 0.5 * h * k1) + v
    k3 = A @ (x + 0.5 * h * k2) + v
    k4 = A @ (x + h * k3) + v
    return x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


class _Events:
    def __init__(self, spec: GameSpec, eps: float):
        geo = spec.geometry
        self.M1, self.M2 = geo.M1, geo.M2
        self.lo, self.hi = np.asarray(geo.box.lo), np.asarray(geo.box.hi)
        self.eps = eps

    def which(self, x) -> str | None:
        if self.M1.sdf(x) <= self.eps + TOL_GEOM:
            return "M1"
        if self.M2.sdf(x) <= self.eps + TOL_GEOM:
            return "M2"
        if np.any(x < self.lo - TOL_GEOM) or np.any(x > self.hi + TOL_GEOM):
            return "BOX"
        return None


def _run(spec: GameSpec, x0, first: Policy, second: Policy, delta: Partition, eps: float,
         theta: float, sub_steps: int = KAPPA_SUB, h_max: float | None = None,
         label: str = "") -> Trajectory:
    sysm = spec.system
    A = sysm.dynamics.A
    ctrl = sysm.dynamics.control_part(sysm.P, sysm.Q)
    ev = _Events(spec, eps)
    x = np.array(x0, dtype=float).reshape(spec.dim)
    if not np.all(np.isfinite(x)):
        raise SimulationError("initial state is not finite")
    if not theta > 0:
        raise SimulationError("horizon theta must be > 0")
    if sub_steps < 1:
        raise SimulationError("sub_steps must be >= 1")
    for name, M in (("M1", ev.M1), ("M2", ev.M2)):
        if M.sdf(x) < eps - TOL_GEOM:
            raise SimulationError(f"x0={x.tolist()} lies inside the {eps}-inflation of {name}")
    g = sysm.cost
    times, states, ps, qs = [0.0], [x.copy()], [], []
    hit = ev.which(x)
    t = 0.0
    p = q = 0
    if hit is None:
        tt = delta.times
        for i in range(len(tt) - 1):
            if t >= theta:
                break
            if first.sync == "partition":
                p = first.index(x)
            if second.sync == "partition":
                q = second.index(x)
            dt_sub = (tt[i + 1] - tt[i]) / sub_steps
            for _ in range(sub_steps):
                if t >= theta or hit is not None:
                    break
                if first.sync == "sub":
                    p = first.index(x)
                if second.sync == "sub":
                    q = second.index(x)
                span = min(dt_sub, theta - t)
                n_rk = 1 if h_max is None else max(1, int(math.ceil(span / h_max - 1e-12)))
                h = span / n_rk
                v = ctrl[p, q]
                for _ in range(n_rk):
                    xn = _rk4(A, v, x, h)
                    if not np.all(np.isfinite(xn)):
                        raise SimulationError(f"state became non-finite at t={t + h}")
                    hit = ev.which(xn)
                    if hit is not None:
                        lo, hi = 0.0, h
                        while hi - lo > TOL_EVENT:
                            mid = 0.5 * (lo + hi)
                            if ev.which(_rk4(A, v, x, mid)) is None:
                                lo = mid
                            else:
                                hi = mid
                        xn = _rk4(A, v, x, hi)
                        hit = ev.which(xn) or hit
                        h = hi
                    t += h
                    x = xn
                    times.append(t)
                    states.append(x.copy())
                    ps.append(p)
                    qs.append(q)
                    if hit is not None:
                        break
            if hit is not None:
                break
    ps.append(p)
    qs.append(q)
    times = np.asarray(times)
    states = np.asarray(states)
    gv = g(states)
    running = float(np.sum(0.5 * (gv[1:] + gv[:-1]) * np.diff(times))) if len(times) > 1 else 0.0
    tau = t if hit is not None else math.inf
    t_hat = {"M1": tau if hit == "M1" else math.inf, "M2": tau if hit == "M2" else math.inf}
    if hit == "M1":
        payoff = running + float(spec.sigma_hat(eps)(x))
    else:
        payoff = math.inf
    return Trajectory(times, states, np.asarray(ps), np.asarray(qs), tau, hit or "NONE", t_hat,
                      payoff, running, label)


def step_motion(spec: GameSpec, x0, controller: FeedbackStrategy, opponent: Policy,
                delta: Partition, eps: float, theta: float, sub_steps: int = KAPPA_SUB,
                h_max: float | None = None) -> Trajectory:
    """Motion with ``controller`` frozen on the partition against ``opponent``."""
    mine = StrategyPolicy(controller, "partition")
    if controller.player is Player.FIRST:
        return _run(spec, x0, mine, opponent, delta, eps, theta, sub_steps, h_max, opponent.label)
    return _run(spec, x0, opponent, mine, delta, eps, theta, sub_steps, h_max, opponent.label)


# -- guarantee estimates ----------------------------------------------------------


@dataclass
class GuaranteeReport:
    kind: str
    x0: list
    epsilon: float
    alpha: float
    diam: float
    estimate: float
    bound: str
    n_rollouts: int
    policies: list
    theta: float
    seed: int
    u_x0: float
    worst: Trajectory | None = field(default=None, repr=False)
    trajectories: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k not in ("worst", "trajectories")}
        d["phi_x0"] = kruzhkov_inv(self.u_x0)
        return d

    def to_text(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


def default_theta(spec: GameSpec, u_x0: float) -> float:
    """``1.25 I / b`` with ``I`` the untransformed value at the start."""
    I = kruzhkov_inv(min(max(u_x0, 0.0), 1.0))
    if not math.isfinite(I):
        raise SimulationError("value is infinite at x0; supply the horizon theta explicitly")
    return max(1.25 * I / spec.b, 1e-6)


def _ensemble(n_opp: int, adversary: FeedbackStrategy, n_rollouts: int, seed: int) -> list[Policy]:
    if n_opp == 1:
        return [ConstantPolicy(0)]
    out: list[Policy] = [StrategyPolicy(adversary, "partition"), StrategyPolicy(adversary, "sub")]
    for k in range(n_rollouts):
        out.append(RandomPolicy(n_opp, np.random.default_rng([seed, k]), k))
    out += [ConstantPolicy(k) for k in range(n_opp)]
    return out


def _estimate(kind: str, spec: GameSpec, x0, S: FeedbackStrategy, delta: Partition, eps: float,
              theta: float | None, n_rollouts: int, seed: int, adversary: FeedbackStrategy | None,
              sub_steps: int, keep: bool) -> GuaranteeReport:
    if n_rollouts < 1:
        raise SimulationError("n_rollouts must be >= 1")
    base = S.field.base
    u0 = float(base(np.asarray(x0, float)))
    if theta is None:
        theta = default_theta(spec, u0)
    alpha = S.field.kernel.alpha
    first = kind == "J1"
    if adversary is None:
        adversary = (second_player(base, spec.system, alpha) if first
                     else first_player(base, spec.system, alpha))
    n_opp = len(spec.system.Q) if first else len(spec.system.P)
    h_max = base.meta.get("time_step")
    best = -math.inf if first else math.inf
    rows, trajs, worst = [], [], None
    done = 0
    for pol in _ensemble(n_opp, adversary, n_rollouts, seed):
        tr = step_motion(spec, x0, S, pol, delta, eps, theta, sub_steps, h_max)
        done += 1
        rows.append([pol.label, tr.payoff, tr.hit_set, tr.tau])
        if keep:
            trajs.append(tr)
        if (first and tr.payoff > best) or (not first and tr.payoff < best) or worst is None:
            best, worst = tr.payoff, tr
        # the extremum cannot move any further
        if (first and best == math.inf) or (not first and best <= 0.0):
            break
    diam = float(f"{delta.diam:.12g}")  # drop rounding noise of the uniform grid
    return GuaranteeReport(kind, np.asarray(x0, float).tolist(), eps, alpha, diam, best,
                           "lower" if first else "upper", done, rows, theta, seed, u0, worst, trajs)


def estimate_J1(spec: GameSpec, x0, U: FeedbackStrategy, delta: Partition, eps: float,
                theta: float | None = None, n_rollouts: int = 4, seed: int = 0,
                adversary: FeedbackStrategy | None = None, sub_steps: int = KAPPA_SUB,
                keep: bool = False) -> GuaranteeReport:
    """Worst payoff for ``U`` over the opponent ensemble (a lower bound of the guarantee).

    The ensemble is the extremal-shift adversary (switching on the partition
    and on the sub-partition), ``n_rollouts`` uniform random sub-partition
    controls and every constant control. With a single opponent control it
    collapses to one motion; once a motion scores ``+inf`` the rest are skipped.
    """
    if U.player is not Player.FIRST:
        raise SimulationError("estimate_J1 needs a first-player strategy")
    return _estimate("J1", spec, x0, U, delta, eps, theta, n_rollouts, seed, adversary, sub_steps, keep)


def estimate_J2(spec: GameSpec, x0, V: FeedbackStrategy, delta: Partition, eps: float,
                theta: float | None = None, n_rollouts: int = 4, seed: int = 0,
                adversary: FeedbackStrategy | None = None, sub_steps: int = KAPPA_SUB,
                keep: bool = False) -> GuaranteeReport:
    """Best payoff against ``V`` over the mirrored ensemble (an upper bound of the guarantee)."""
    if V.player is not Player.SECOND:
        raise SimulationError("estimate_J2 needs a second-player strategy")
    return _estimate("J2", spec, x0, V, delta, eps, theta, n_rollouts, seed, adversary, sub_steps, keep)


def refinement_ladder(spec: GameSpec, x0, strategy_builder, ladder, theta: float | None = None,
                      n_rollouts: int = 4, seed: int = 0) -> list[GuaranteeReport]:
    """``estimate_J1`` for each rung ``(eps, alpha, diam)``; ``strategy_builder(alpha)`` gives U."""
    rungs = [tuple(float(v) for v in r) for r in ladder]
    for a, b in zip(rungs, rungs[1:]):
        if any(bv > av for av, bv in zip(a, b)):
            raise SimulationError("ladder rungs must not increase in eps, alpha or diam")
    out = []
    for eps, alpha, diam in rungs:
        U = strategy_builder(alpha)
        u0 = float(U.field.base(np.asarray(x0, float)))
        th = theta if theta is not None else default_theta(spec, u0)
        out.append(estimate_J1(spec, x0, U, Partition.uniform(diam, th), eps, th, n_rollouts, seed))
    return out


def write_ndrec(path, spec: GameSpec, trajectories) -> None:
    P, Q = spec.system.P.points, spec.system.Q.points
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for tr in trajectories:
            for rec in tr.records(P, Q):
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# -- brute-force oracle ---------------------------------------------------------


def brute_force_value(spec: GameSpec, x0, h_bf: float, depth: int, n_sub: int = 64) -> float:
    """Lower value of the game tree with steps ``h_bf``: min over p, max over q per step.

    Exits (distance 0 to a set, or leaving the box) are located inside a step
    by bisection. Reaching the target pays the running cost so far plus the
    payoff extension; the lifeline, the box edge and running out of depth pay
    ``+inf``.
    """
    sysm = spec.system
    nP, nQ = len(sysm.P), len(sysm.Q)
    if not h_bf > 0 or depth < 0:
        raise SimulationError("brute force needs h_bf > 0 and depth >= 0")
    leaves = float(nP * nQ) ** depth
    if leaves > BRUTE_FORCE_LIMIT:
        raise SimulationError(f"game tree with {leaves:.3g} leaves exceeds the limit {BRUTE_FORCE_LIMIT}")
    A = sysm.dynamics.A
    ctrl = sysm.dynamics.control_part(sysm.P, sysm.Q)
    ev = _Events(spec, 0.0)
    sig = spec.sigma_hat(0.0)
    g = sysm.cost
    s_grid = np.linspace(0.0, h_bf, n_sub + 1)

    def leg(x, v):
        # returns (state at end or exit, elapsed cost, exit label or None)
        xs = [x]
        for k in range(1, len(s_grid)):
            xn = _rk4(A, v, xs[-1], s_grid[k] - s_grid[k - 1])
            hit = ev.which(xn)
            if hit is not None:
                lo, hi = s_grid[k - 1], s_grid[k]
                while hi - lo > TOL_EVENT:
                    mid = 0.5 * (lo + hi)
                    if ev.which(_rk4(A, v, xs[-1], mid - s_grid[k - 1])) is None:
                        lo = mid
                    else:
                        hi = mid
                xe = _rk4(A, v, xs[-1], hi - s_grid[k - 1])
                ts = np.append(s_grid[:k], hi)
                pts = np.vstack(xs + [xe])
                gv = g(pts)
                return xe, float(np.sum(0.5 * (gv[1:] + gv[:-1]) * np.diff(ts))), ev.which(xe) or hit
            xs.append(xn)
        pts = np.vstack(xs)
        gv = g(pts)
        return xs[-1], float(np.sum(0.5 * (gv[1:] + gv[:-1]) * np.diff(s_grid))), None

    def value(x, d):
        hit = ev.which(x)
        if hit == "M1":
            return float(sig(x))
        if hit is not None:
            return math.inf
        if d == 0:
            return math.inf
        best = math.inf
        for p in range(nP):
            worst = -math.inf
            for q in range(nQ):
                xe, cost, hit = leg(x, ctrl[p, q])
                if hit == "M1":
                    val = cost + float(sig(xe))
                elif hit is not None:
                    val = math.inf
                else:
                    val = cost + value(xe, d - 1)
                worst = max(worst, val)
                if worst >= best:
                    break
            best = min(best, worst)
        return best

    return value(np.array(x0, dtype=float).reshape(spec.dim), depth)


__all__ = [
    "ConstantPolicy", "GuaranteeReport", "Partition", "Policy", "RandomPolicy", "SimulationError",
    "StrategyPolicy", "Trajectory", "brute_force_value", "default_theta", "estimate_J1",
    "estimate_J2", "refinement_ladder", "step_motion", "write_ndrec",
]
