"""Control system, running cost, Hamiltonians and extremal-shift pre-strategies.

Every registered model is affine in the state and in both controls,

    f(x, p, q) = A x + B p + C q + c,

so the whole registry shares one evaluation path (the solver's compiled
kernel relies on this). Control sets are finite, hence every min-max below
is an exact exhaustive evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TOL_ISAACS = 1e-12
MODELS = ("simple-motion", "relative-pursuit", "control-affine", "rotating")


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ControlSet:
    points: np.ndarray
    label: str

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0 or len(pts) == 0:
            raise DynamicsError(f"control set {self.label} must be non-empty")
        if not np.all(np.isfinite(pts)):
            raise DynamicsError(f"control set {self.label} has non-finite entries")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class Dynamics:
    model: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    c: np.ndarray
    lam_supplied: float | None = None

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @classmethod
    def from_model(cls, model: str, dim: int, params: dict | None = None,
                   p_dim: int | None = None, q_dim: int | None = None,
                   lam: float | None = None) -> "Dynamics":
        params = params or {}
        eye = np.eye(dim)
        if model == "simple-motion":
            A, B = np.zeros((dim, dim)), eye
            C = np.zeros((dim, q_dim or dim))
        elif model == "relative-pursuit":
            A, B, C = np.zeros((dim, dim)), eye, -eye
        elif model == "rotating":
            if dim != 2:
                raise DynamicsError("the rotating model is two-dimensional")
            A = np.array([[0.0, 1.0], [-1.0, 0.0]])
            B, C = eye, -eye
        elif model == "control-affine":
            try:
                A = np.asarray(params["A"], float).reshape(dim, dim)
                B = np.asarray(params["B"], float).reshape(dim, -1)
                C = np.asarray(params["C"], float).reshape(dim, -1)
            except KeyError as exc:
                raise DynamicsError(f"control-affine model needs parameter {exc}") from None
        else:
            raise DynamicsError(f"unknown model {model!r}; known: {', '.join(MODELS)}")
        c = np.asarray(params.get("drift", np.zeros(dim)), float).reshape(dim)
        if p_dim is not None and B.shape[1] != p_dim:
            raise DynamicsError(f"P controls have dimension {p_dim}, model expects {B.shape[1]}")
        if q_dim is not None and C.shape[1] != q_dim:
            raise DynamicsError(f"Q controls have dimension {q_dim}, model expects {C.shape[1]}")
        return cls(model, A, B, C, c, lam)

    def f(self, x, p, q) -> np.ndarray:
        x, p, q = (np.asarray(v, float) for v in (x, p, q))
        return x @ self.A.T + p @ self.B.T + q @ self.C.T + self.c

    def control_part(self, P: ControlSet, Q: ControlSet) -> np.ndarray:
        """``B p + C q + c`` for all pairs, shape ``(nP, nQ, d)``."""
        bp = P.points @ self.B.T
        cq = Q.points @ self.C.T
        return bp[:, None, :] + cq[None, :, :] + self.c

    def velocities(self, x, P: ControlSet, Q: ControlSet) -> np.ndarray:
        """All velocities at ``x``, shape ``x.shape[:-1] + (nP, nQ, d)``."""
        x = np.asarray(x, float)
        return (x @ self.A.T)[..., None, None, :] + self.control_part(P, Q)

    def state_lipschitz(self) -> float:
        return float(np.linalg.norm(self.A, 2))

    def growth_constant(self, P: ControlSet, Q: ControlSet) -> float:
        """R_f with ``|f(x,p,q)| <= R_f (1 + |x|)``."""
        cp = np.linalg.norm(self.control_part(P, Q), axis=-1).max()
        return float(max(self.state_lipschitz(), cp))


@dataclass(frozen=True, eq=False)
class RunningCost:
    """Running cost g with lower bound b.

    ``constant``: ``value``; ``affine-clamped``: ``max(b, slope . x + value)``;
    ``radial``: ``value + slope * |x - center|``.
    """

    kind: str
    params: dict
    b: float

    def __post_init__(self):
        if self.kind not in ("constant", "affine-clamped", "radial"):
            raise DynamicsError(f"unknown running cost kind {self.kind!r}")
        if not self.b > 0:
            raise DynamicsError("running cost lower bound b must be > 0")
        if self.kind == "constant" and float(self.params.get("value", self.b)) < self.b:
            raise DynamicsError("constant running cost is below b")
        if self.kind == "radial":
            if float(self.params.get("value", self.b)) < self.b or float(self.params["slope"]) < 0:
                raise DynamicsError("radial running cost needs value >= b and slope >= 0")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        p = self.params
        if self.kind == "constant":
            return np.full(x.shape[:-1], float(p.get("value", self.b)))
        if self.kind == "affine-clamped":
            return np.maximum(self.b, x @ np.asarray(p["slope"], float) + float(p.get("value", 0.0)))
        r = np.linalg.norm(x - np.asarray(p["center"], float), axis=-1)
        return float(p.get("value", self.b)) + float(p["slope"]) * r

    def lipschitz(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "affine-clamped":
            return float(np.linalg.norm(self.params["slope"]))
        return float(self.params["slope"])

    def validate(self, xs: np.ndarray) -> None:
        if np.any(self(xs) < self.b - 1e-12):
            raise DynamicsError("running cost drops below b on sampled states")


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """Dynamics, both control sets and the running cost."""

    dynamics: Dynamics
    P: ControlSet
    Q: ControlSet
    cost: RunningCost
    lam: float = field(init=False)

    def __post_init__(self):
        if self.P.dim != self.dynamics.B.shape[1] or self.Q.dim != self.dynamics.C.shape[1]:
            raise DynamicsError("control dimensions do not match the model")
        analytic = self.dynamics.state_lipschitz() + self.cost.lipschitz()
        supplied = self.dynamics.lam_supplied or 0.0
        object.__setattr__(self, "lam", float(max(analytic, supplied)))

    @property
    def dim(self) -> int:
        return self.dynamics.dim

    @property
    def b(self) -> float:
        return self.cost.b

    def velocities(self, x) -> np.ndarray:
        return self.dynamics.velocities(x, self.P, self.Q)

    def max_speed(self, xs) -> float:
        return float(np.linalg.norm(self.velocities(xs), axis=-1).max())

    def estimate_lipschitz(self, lo, hi, n: int = 2000, seed: int = 0) -> float:
        """Sampled finite-difference estimate of the joint Lipschitz constant of f and g."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(lo, hi, size=(n, self.dim))
        y = rng.normal(scale=1e-3 * (1 + np.max(np.subtract(hi, lo))), size=(n, self.dim))
        df = np.linalg.norm(self.velocities(x + y) - self.velocities(x), axis=-1).max(axis=(1, 2))
        dg = np.abs(self.cost(x + y) - self.cost(x))
        return float(np.max((df + dg) / np.linalg.norm(y, axis=-1)))


def _inner(system: ControlSystem, x, s) -> np.ndarray:
    v = system.velocities(x)
    s = np.asarray(s, float)
    return np.einsum("...pqd,...d->...pq", v, s)


def lower_minmax(system: ControlSystem, x, s) -> np.ndarray:
    """``min_p max_q <s, f(x, p, q)>``."""
    return _inner(system, x, s).max(axis=-1).min(axis=-1)


def upper_maxmin(system: ControlSystem, x, s) -> np.ndarray:
    """``max_q min_p <s, f(x, p, q)>``."""
    return _inner(system, x, s).min(axis=-2).max(axis=-1)


def hamiltonian_H(system: ControlSystem, x, s, z) -> np.ndarray:
    x = np.asarray(x, float)
    return lower_minmax(system, x, s) + system.cost(x) * (1.0 - np.asarray(z, float))


def hamiltonian_script(system: ControlSystem, x, s) -> np.ndarray:
    return hamiltonian_H(system, x, s, 0.0)


@dataclass
class IsaacsReport:
    max_gap: float
    worst_x: list
    worst_s: list
    tol: float
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def check_isaacs(system: ControlSystem, sample_xs, sample_ss, tol: float = TOL_ISAACS) -> IsaacsReport:
    xs = np.atleast_2d(np.asarray(sample_xs, float))
    ss = np.atleast_2d(np.asarray(sample_ss, float))
    if len(xs) == 0 or len(ss) == 0:
        raise DynamicsError("check_isaacs needs non-empty samples")
    X = np.repeat(xs, len(ss), axis=0)
    S = np.tile(ss, (len(xs), 1))
    gap = np.abs(lower_minmax(system, X, S) - upper_maxmin(system, X, S))
    k = int(np.argmax(gap))
    g = float(gap[k])
    return IsaacsReport(g, X[k].tolist(), S[k].tolist(), tol, g <= tol)


def _first_extreme(values: np.ndarray, kind: str) -> int:
    """Index of the min/max with ties broken toward the lowest index."""
    best = values.min() if kind == "min" else values.max()
    slack = 1e-12 * (1.0 + abs(best))
    hit = values <= best + slack if kind == "min" else values >= best - slack
    return int(np.argmax(hit))


def p0_index(system: ControlSystem, x, s) -> int:
    table = _inner(system, np.asarray(x, float), s)
    return _first_extreme(table.max(axis=1), "min")


def q0_index(system: ControlSystem, x, s) -> int:
    table = _inner(system, np.asarray(x, float), s)
    return _first_extreme(table.min(axis=0), "max")


def p0(system: ControlSystem, x, s) -> np.ndarray:
    return system.P.points[p0_index(system, x, s)]


def q0(system: ControlSystem, x, s) -> np.ndarray:
    return system.Q.points[q0_index(system, x, s)]
