"""Command line: ``exitgame solve|simulate|check|ladder <config> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ScenarioConfig, load
from .grid import ValueField, read_csv, write_csv
from .simulator import Partition, default_theta, estimate_J1, estimate_J2, refinement_ladder, write_ndrec
from .solver import solve
from .strategies import first_player, second_player
from .verifier import (Candidate, check_cond_low, check_subsolution, check_supersolution, grid_samples,
                       subsol_candidate)

logger = logging.getLogger("exitgame")


def _dump(obj) -> str:
    def default(v):
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        if isinstance(v, np.ndarray):
            return v.tolist()
        raise TypeError(type(v))
    return json.dumps(obj, indent=2, sort_keys=True, default=default) + "\n"


def _out(args) -> Path:
    p = Path(args.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _value_field(cfg: ScenarioConfig, args) -> ValueField:
    """``--value`` if given, else ``<out>/value.csv`` from the same config, else a fresh solve."""
    path = Path(args.value) if getattr(args, "value", None) else Path(args.out) / "value.csv"
    if path.exists():
        vf = read_csv(path)
        if vf.meta.get("digest") == cfg.digest or getattr(args, "value", None):
            logger.info("using value field %s", path)
            return vf
    vf, _ = solve(cfg.spec, cfg.grid, cfg.solver)
    vf.meta["digest"] = cfg.digest
    return vf


def _verify(cfg: ScenarioConfig, vf: ValueField) -> dict:
    ver = cfg.verifier
    S = grid_samples(cfg.grid, cfg.spec, ver.samples)
    cand = Candidate.from_field(vf)
    sub = check_subsolution(cand, cfg.spec, S, ver.tol_visc, ver.tol_dd)
    sup = check_supersolution(cand, cfg.spec, S, ver.tol_visc, ver.tol_dd)
    return {"subsolution": sub.passed, "supersolution": sup.passed,
            "sub_worst_margin": sub.worst_margin, "super_worst_margin": sup.worst_margin}


def cmd_solve(args) -> int:
    cfg = load(args.config)
    out = _out(args)
    vf, rep = solve(cfg.spec, cfg.grid, cfg.solver)
    vf.meta["digest"] = cfg.digest
    write_csv(vf, out / "value.csv")
    body = {"scenario": cfg.name, "digest": cfg.digest, "grid": cfg.grid.describe(), **rep.as_dict()}
    if not args.no_verify:
        body["verifier"] = _verify(cfg, vf)
    (out / "solve_report.txt").write_text(_dump(body), encoding="utf-8", newline="\n")
    print(f"{cfg.name}: {rep.iterations} iterations, residual {rep.residual:.3g} -> {out / 'value.csv'}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load(args.config)
    sim = cfg.simulation
    out = _out(args)
    x0 = args.x0 if args.x0 is not None else sim.x0
    if x0 is None:
        raise ConfigError("simulation.x0", "no start point (config or --x0)")
    eps = args.eps if args.eps is not None else sim.eps
    diam = args.diam if args.diam is not None else sim.diam
    alpha = args.alpha if args.alpha is not None else cfg.mollifier.alphas[-1]
    try:
        cfg.spec.geometry.check_eps(eps)
    except ValueError as exc:
        raise ConfigError("--eps", str(exc)) from None
    vf = _value_field(cfg, args)
    natural = None
    if cfg.mollifier.base == "subsol":
        cand = subsol_candidate(cfg.spec, cfg.verifier.candidate_eps or eps)
        natural = ValueField(vf.grid, cand(vf.grid.coords()), vf.classes, {})
    U = first_player(vf, cfg.spec.system, alpha)
    V = second_player(vf, cfg.spec.system, alpha, natural)
    theta = args.theta if args.theta is not None else sim.theta
    if theta is None:
        theta = default_theta(cfg.spec, float(vf(np.asarray(x0, float))))
    delta = Partition.uniform(diam, theta)
    seed = args.seed if args.seed is not None else sim.seed
    kw = dict(theta=theta, n_rollouts=sim.rollouts, seed=seed, sub_steps=sim.sub_steps, keep=True)
    if args.player == "first":
        rep = estimate_J1(cfg.spec, x0, U, delta, eps, adversary=V, **kw)
    else:
        rep = estimate_J2(cfg.spec, x0, V, delta, eps, adversary=U, **kw)
    write_ndrec(out / "trajectories.ndrec", cfg.spec, rep.trajectories)
    (out / "guarantee.txt").write_text(rep.to_text(), encoding="utf-8", newline="\n")
    print(f"{cfg.name}: {rep.kind} estimate {rep.estimate:.6g} ({rep.bound} bound, {rep.n_rollouts} rollouts)")
    return 0


def cmd_check(args) -> int:
    cfg = load(args.config)
    ver = cfg.verifier
    out = _out(args)
    eps = args.eps if args.eps is not None else ver.candidate_eps
    S = grid_samples(cfg.grid, cfg.spec, ver.samples)
    reports = {}
    if args.candidate == "subsol":
        cand = subsol_candidate(cfg.spec, eps)
        reports["subsolution"] = check_subsolution(cand, cfg.spec, S, ver.tol_visc, ver.tol_dd)
    else:
        vf = _value_field(cfg, args)
        cand = Candidate.from_field(vf)
        reports["subsolution"] = check_subsolution(cand, cfg.spec, S, ver.tol_visc, ver.tol_dd)
        reports["supersolution"] = check_supersolution(cand, cfg.spec, S, ver.tol_visc, ver.tol_dd)
    reports["cond_low"] = check_cond_low(cfg.spec, eps, S, ver.tol_visc, ver.tol_dd)
    body = {"scenario": cfg.name, "candidate": args.candidate,
            **{k: r.as_dict() for k, r in reports.items()}}
    (out / "check_report.txt").write_text(_dump(body), encoding="utf-8", newline="\n")
    for k, r in reports.items():
        print(f"{cfg.name}: {k} {'PASS' if r.passed else 'FAIL'} (worst margin {r.worst_margin:.3g})")
    return 0


def cmd_ladder(args) -> int:
    cfg = load(args.config)
    out = _out(args)
    x0 = args.x0 if args.x0 is not None else (cfg.ladder_x0 or cfg.simulation.x0)
    if x0 is None:
        raise ConfigError("ladder.x0", "no start point (config or --x0)")
    if not cfg.ladder:
        raise ConfigError("ladder.rungs", "no rungs configured")
    vf = _value_field(cfg, args)
    sim = cfg.simulation
    reps = refinement_ladder(cfg.spec, x0, lambda a: first_player(vf, cfg.spec.system, a), cfg.ladder,
                             theta=sim.theta, n_rollouts=sim.rollouts, seed=sim.seed)
    phi = reps[0].as_dict()["phi_x0"]
    with (out / "ladder.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rung", "eps", "alpha", "diam", "J1", "phi_x0", "gap", "abs_gap", "n_rollouts"])
        for k, r in enumerate(reps):
            gap = r.estimate - phi if math.isfinite(r.estimate) else math.inf
            w.writerow([k, repr(r.epsilon), repr(r.alpha), repr(r.diam), repr(r.estimate), repr(phi),
                        repr(gap), repr(abs(gap)), r.n_rollouts])
    for k, r in enumerate(reps):
        print(f"rung {k}: eps={r.epsilon} alpha={r.alpha} diam={r.diam} J1={r.estimate:.6g} phi={phi:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exitgame", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="scenario file or shipped scenario name")
        p.add_argument("--out", default=".", help="output directory (default: .)")

    p = sub.add_parser("solve", help="solve the grid scheme, write value.csv and solve_report.txt")
    common(p)
    p.add_argument("--no-verify", action="store_true", help="skip the sub/supersolution checks")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="estimate a player's guarantee, write trajectories.ndrec and guarantee.txt")
    common(p)
    p.add_argument("--player", choices=["first", "second"], default="first")
    p.add_argument("--x0", type=float, nargs="+")
    p.add_argument("--alpha", type=float)
    p.add_argument("--diam", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--value", help="value.csv to use instead of solving")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="run the viscosity checks, write check_report.txt")
    common(p)
    p.add_argument("--candidate", choices=["subsol", "solved"], default="solved")
    p.add_argument("--eps", type=float, help="inflation radius of the lower candidate")
    p.add_argument("--value", help="value.csv to use instead of solving")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("ladder", help="refinement ladder of first-player estimates, write ladder.csv")
    common(p)
    p.add_argument("--x0", type=float, nargs="+")
    p.add_argument("--value", help="value.csv to use instead of solving")
    p.set_defaults(func=cmd_ladder)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
