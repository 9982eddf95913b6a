"""Scenario configuration files.

A scenario is a TOML document; see ``src/exitgame/scenarios/*.cfg`` for the
shipped ones. Loading re-validates the standing assumptions of the game
(positive lower bound of the running cost, bounded Lipschitz payoff,
admissible inflation radius, ...) and reports the offending key.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import ControlSet, ControlSystem, Dynamics, DynamicsError, RunningCost
from .geometry import BoundaryPayoff, DomainGeometry, GeometryError, shape_from_dict
from .grid import Grid
from .scenario import GameSpec
from .solver import SolverConfig

SCENARIO_DIR = Path(__file__).parent / "scenarios"


class ConfigError(ValueError):
    """Invalid scenario; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.cfg"


@dataclass
class MollifierSettings:
    alphas: list = field(default_factory=lambda: [0.04])
    base: str = "solved"
    refine: bool = True
    strict_alpha: bool = False


@dataclass
class SimulationSettings:
    eps: float = 0.01
    diam: float = 0.01
    theta: float | None = None
    rollouts: int = 4
    seed: int = 0
    sub_steps: int = 4
    x0: list | None = None


@dataclass
class VerifierSettings:
    tol_visc: float = 1e-3
    tol_dd: float = 1e-4
    candidate_eps: float = 0.0
    samples: int = 400


@dataclass
class ScenarioConfig:
    spec: GameSpec
    grid: Grid
    solver: SolverConfig
    mollifier: MollifierSettings
    simulation: SimulationSettings
    verifier: VerifierSettings
    ladder: list
    ladder_x0: list | None
    raw: dict
    digest: str

    @property
    def name(self) -> str:
        return self.spec.name


def _req(tbl: dict, key: str, path: str):
    if key not in tbl:
        raise ConfigError(f"{path}.{key}" if path else key, "required key is missing")
    return tbl[key]


def _controls(value, path: str, label: str) -> ControlSet:
    if isinstance(value, dict):
        if "circle" in value:
            n = int(value["circle"])
            r = float(value.get("radius", 1.0))
            phase = float(value.get("phase", 0.0))
            ang = phase + 2 * np.pi * np.arange(n) / n
            pts = r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
            if value.get("include_zero", False):
                pts = np.vstack([pts, np.zeros(2)])
            return ControlSet(pts, label)
        raise ConfigError(path, "control table needs 'circle' (2-D directions) or a list of vectors")
    try:
        return ControlSet(np.asarray(value, float), label)
    except (DynamicsError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def build(raw: dict, source: str = "<config>") -> ScenarioConfig:
    name = str(raw.get("name", Path(source).stem))
    geo_t = _req(raw, "geometry", "")
    box_t = _req(geo_t, "box", "geometry")
    try:
        box = shape_from_dict({"kind": "box", **box_t})
        M1 = shape_from_dict(_req(geo_t, "M1", "geometry"))
        M2 = shape_from_dict(_req(geo_t, "M2", "geometry"))
        geo = DomainGeometry(M1, M2, box)
    except GeometryError as exc:
        raise ConfigError("geometry", str(exc)) from None
    except KeyError as exc:
        raise ConfigError("geometry", f"shape descriptor misses {exc}") from None
    dim = geo.dim

    dyn_t = _req(raw, "dynamics", "")
    P = _controls(_req(dyn_t, "P", "dynamics"), "dynamics.P", "P")
    Q = _controls(_req(dyn_t, "Q", "dynamics"), "dynamics.Q", "Q")
    try:
        dyn = Dynamics.from_model(
            str(_req(dyn_t, "model", "dynamics")), dim, dyn_t.get("params"),
            P.dim, Q.dim, dyn_t.get("lambda"),
        )
    except DynamicsError as exc:
        raise ConfigError("dynamics", str(exc)) from None

    cost_t = _req(raw, "cost", "")
    if "b" not in cost_t:
        raise ConfigError("cost.b", "required: the running cost needs a lower bound b > 0")
    b = float(cost_t["b"])
    if not b > 0:
        raise ConfigError("cost.b", f"running cost lower bound must be > 0, got {b}")
    try:
        cost = RunningCost(str(cost_t.get("kind", "constant")),
                           {k: v for k, v in cost_t.items() if k not in ("kind", "b")}, b)
        system = ControlSystem(dyn, P, Q, cost)
    except DynamicsError as exc:
        raise ConfigError("cost", str(exc)) from None

    pay_t = raw.get("payoff", {"kind": "constant", "value": 0.0})
    Sigma = float(pay_t.get("Sigma", pay_t.get("value", 0.0) if pay_t.get("kind", "constant") == "constant" else 0.0))
    if Sigma < 0:
        raise ConfigError("payoff.Sigma", "payoff bound must be >= 0")
    params = {k: v for k, v in pay_t.items() if k not in ("kind", "Sigma", "L")}
    try:
        probe = BoundaryPayoff(str(pay_t.get("kind", "constant")), params, Sigma, 0.0)
        L = float(pay_t.get("L", probe.natural_lipschitz()))
        payoff = BoundaryPayoff(probe.kind, params, Sigma, L)
        spec = GameSpec(geo, system, payoff, name)
    except (GeometryError, DynamicsError) as exc:
        raise ConfigError("payoff", str(exc)) from None

    grid_t = raw.get("grid", {})
    nodes = grid_t.get("nodes", [1001] if dim == 1 else [201] * dim)
    if isinstance(nodes, int):
        nodes = [nodes] * dim
    if len(nodes) != dim:
        raise ConfigError("grid.nodes", f"needs {dim} entries")
    try:
        grid = Grid(box.lo, box.hi, tuple(int(n) for n in nodes))
        solver = SolverConfig(**raw.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError("grid/solver", str(exc)) from None

    moll = MollifierSettings(**raw.get("mollifier", {}))
    for a in moll.alphas:
        if not a > 0:
            raise ConfigError("mollifier.alphas", "every alpha must be > 0")
        if moll.strict_alpha and spec.lam > 0 and a > spec.b / spec.lam:
            raise ConfigError("mollifier.alphas",
                              f"alpha={a} exceeds b/lambda={spec.b / spec.lam:.6g} (strict_alpha)")
    if moll.base not in ("solved", "subsol"):
        raise ConfigError("mollifier.base", "must be 'solved' or 'subsol'")

    sim = SimulationSettings(**raw.get("simulation", {}))
    try:
        geo.check_eps(sim.eps)
    except GeometryError as exc:
        raise ConfigError("simulation.eps", str(exc)) from None
    if not sim.diam > 0:
        raise ConfigError("simulation.diam", "must be > 0")

    ver = VerifierSettings(**raw.get("verifier", {}))
    lad_t = raw.get("ladder", {})
    rungs = [tuple(float(v) for v in r) for r in lad_t.get("rungs", [])]
    for r in rungs:
        if len(r) != 3:
            raise ConfigError("ladder.rungs", "each rung is [eps, alpha, diam]")
        try:
            geo.check_eps(r[0])
        except GeometryError as exc:
            raise ConfigError("ladder.rungs", str(exc)) from None

    digest = hashlib.sha256(repr(sorted(_flatten(raw))).encode()).hexdigest()[:16]
    return ScenarioConfig(spec, grid, solver, moll, sim, ver, rungs, lad_t.get("x0"), raw, digest)


def _flatten(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield (f"{prefix}{k}", repr(v))


def load(path) -> ScenarioConfig:
    p = Path(path)
    if not p.exists() and scenario_path(str(path)).exists():
        p = scenario_path(str(path))
    try:
        raw = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(p), f"malformed scenario file: {exc}") from None
    return build(raw, str(p))


def loads(text: str, source: str = "<string>") -> ScenarioConfig:
    return build(tomllib.loads(text), source)
