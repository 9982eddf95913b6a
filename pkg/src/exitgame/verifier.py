"""Numeric checks of the sub/supersolution inequalities and of the lower condition.

Directional derivatives are estimated as extreme difference quotients

    (v(x + d f') - v(x)) / d,   0 < d < e_k,  |f' - f| <= e_k,  x + d f' in G,

over a fixed ladder ``e_k = {1e-2, 1e-3, 1e-4} * diam(box)``; the estimate is
the last rung. Quotients that keep growing roughly like ``1/d`` (at least a
factor sqrt(10) per rung, same sign, final magnitude above ``1/tol_dd``)
are reported as infinite.

The hull sets in the inequalities are evaluated at their vertices only (one
vertex per control of the finite control set), with ``z`` bound to the
candidate's value at the point. Every report repeats this note.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, ValueField, interpolate
from .scenario import GameSpec

LADDER = (1e-2, 1e-3, 1e-4)
DELTA_FRACTIONS = (0.5, 0.1, 0.01)
TOL_VISC = 1e-3
TOL_DD = 1e-4

NOTE = ("hull sets evaluated at control vertices only, z bound to the candidate value; "
        "derivatives from a fixed difference-quotient ladder")


class Candidate:
    """A function ``x -> [0, 1]`` evaluated on demand (vectorised over rows)."""

    def __init__(self, fn, label: str = "candidate"):
        self.fn = fn
        self.label = label

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, float)
        return np.asarray(self.fn(x), float)

    @classmethod
    def from_field(cls, vf: ValueField, label: str = "solved") -> "Candidate":
        return cls(lambda x: interpolate(vf, np.atleast_2d(x)), label)


def subsol_candidate(spec: GameSpec, eps: float) -> Candidate:
    """1 on the eps-inflated lifeline, the transformed payoff extension elsewhere."""
    spec.geometry.check_eps(eps)
    return Candidate(lambda x: spec.sigma_tilde(np.atleast_2d(x), eps), f"subsol(eps={eps})")


@dataclass
class DDEstimate:
    value: float
    status: str  # finite | +inf | -inf | no-admissible
    rungs: list
    quotients: list
    stable: bool

    @property
    def admissible(self) -> bool:
        return self.status != "no-admissible"


class _Prober:
    """Shared probe geometry for one scenario."""

    def __init__(self, spec: GameSpec, tol_dd: float = TOL_DD):
        geo = spec.geometry
        self.geo = geo
        self.lo = np.asarray(geo.box.lo)
        self.hi = np.asarray(geo.box.hi)
        self.rungs = [c * geo.box.diameter for c in LADDER]
        self.tol_dd = tol_dd
        d = geo.dim
        self.dirs = np.vstack([np.zeros(d), np.eye(d), -np.eye(d)])

    def admissible(self, pts: np.ndarray) -> np.ndarray:
        inside = np.all((pts >= self.lo - 1e-12) & (pts <= self.hi + 1e-12), axis=-1)
        return inside & self.geo.in_G(pts)

    def quotients(self, cand: Candidate, x: np.ndarray, F: np.ndarray, sup: bool) -> np.ndarray:
        """Extreme quotient per direction and rung, shape ``(len(F), n_rungs)``; NaN if none."""
        x = np.asarray(x, float)
        F = np.atleast_2d(np.asarray(F, float))
        m, d = F.shape
        R, K, J = len(self.rungs), len(DELTA_FRACTIONS), len(self.dirs)
        eps = np.asarray(self.rungs)[:, None, None, None]
        dl = eps * np.asarray(DELTA_FRACTIONS)[None, :, None, None]
        fp = F[None, None, None, :, :] + (eps[..., None] * self.dirs[None, None, :, None, :])
        pts = x + dl[..., None] * fp  # (R, K, J, m, d)
        flat = pts.reshape(-1, d)
        ok = self.admissible(flat)
        vals = np.full(len(flat), np.nan)
        if ok.any():
            vals[ok] = cand(flat[ok])
        vx = float(cand(x[None, :])[0])
        q = (vals.reshape(R, K, J, m) - vx) / dl
        q = np.moveaxis(q, 3, 0).reshape(m, R, K * J)
        none = np.all(np.isnan(q), axis=2)
        if sup:
            out = np.where(np.isnan(q), -np.inf, q).max(axis=2)
        else:
            out = np.where(np.isnan(q), np.inf, q).min(axis=2)
        out[none] = np.nan
        return out

    def estimate(self, row: np.ndarray) -> DDEstimate:
        fin = [(r, q) for r, q in zip(self.rungs, row) if not np.isnan(q)]
        if not fin:
            return DDEstimate(math.nan, "no-admissible", list(self.rungs), row.tolist(), False)
        qs = [q for _, q in fin]
        last = qs[-1]
        if len(qs) >= 2 and abs(last) > 1.0 / self.tol_dd:
            grows = all(
                abs(b) >= math.sqrt(10) * abs(a) and np.sign(a) == np.sign(b) != 0
                for a, b in zip(qs, qs[1:])
            )
            if grows:
                st = "+inf" if last > 0 else "-inf"
                return DDEstimate(math.inf if last > 0 else -math.inf, st, list(self.rungs), row.tolist(), True)
        stable = len(qs) >= 2 and abs(qs[-1] - qs[-2]) <= self.tol_dd * max(1.0, abs(last))
        return DDEstimate(float(last), "finite", list(self.rungs), row.tolist(), bool(stable))


def dplus(cand: Candidate, x, f_dir, spec: GameSpec, tol_dd: float = TOL_DD) -> DDEstimate:
    pr = _Prober(spec, tol_dd)
    return pr.estimate(pr.quotients(cand, np.asarray(x, float), f_dir, sup=True)[0])


def dminus(cand: Candidate, x, f_dir, spec: GameSpec, tol_dd: float = TOL_DD) -> DDEstimate:
    pr = _Prober(spec, tol_dd)
    return pr.estimate(pr.quotients(cand, np.asarray(x, float), f_dir, sup=False)[0])


# -- reports ---------------------------------------------------------------------


@dataclass
class VerifierReport:
    kind: str
    candidate: str
    passed: bool
    n_points: int
    n_skipped: int
    worst_margin: float
    offenders: list = field(default_factory=list)
    boundary: dict = field(default_factory=dict)
    semicontinuity: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    note: str = NOTE

    def as_dict(self) -> dict:
        return dict(self.__dict__)

    def to_text(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def grid_samples(grid: Grid, spec: GameSpec, n: int = 400) -> np.ndarray:
    """At most ``n`` evenly strided grid nodes lying in G."""
    X = grid.coords()
    X = X[spec.geometry.in_G(X)]
    if len(X) > n:
        X = X[np.linspace(0, len(X) - 1, n).round().astype(int)]
    return X


def _persists(jumps: list, tol: float) -> bool:
    """A jump is real if it exceeds ``tol`` on every rung and does not shrink at the last one."""
    js = [j for j in jumps if not np.isnan(j)]
    if not js or any(j <= tol for j in js):
        return False
    return len(js) == 1 or js[-1] >= 0.5 * js[-2]


def _semicontinuity(cand: Candidate, X: np.ndarray, pr: _Prober, upper: bool, tol: float) -> dict:
    d = X.shape[1]
    flagged = []
    vx = cand(X)
    for k, x in enumerate(X):
        jumps = []
        for r in pr.rungs:
            nb = x + r * np.vstack([np.eye(d), -np.eye(d)])
            nb = nb[np.all((nb >= pr.lo) & (nb <= pr.hi), axis=1)]
            if not len(nb):
                jumps.append(np.nan)
                continue
            vn = cand(nb)
            jumps.append(float(np.max(vn - vx[k]) if upper else np.max(vx[k] - vn)))
        if _persists(jumps, tol):
            flagged.append({"x": x.tolist(), "jumps": jumps})
    return {"kind": "upper" if upper else "lower", "flagged": flagged[:10], "n_flagged": len(flagged),
            "passed": not flagged}


def _inward(shape, pts: np.ndarray, h: float = 1e-7) -> np.ndarray:
    """Unit gradient of the signed distance (points away from the set)."""
    d = pts.shape[1]
    g = np.stack([(shape.sdf(pts + h * e) - shape.sdf(pts - h * e)) / (2 * h) for e in np.eye(d)], axis=1)
    n = np.linalg.norm(g, axis=1, keepdims=True)
    return np.where(n > 0, g / np.where(n > 0, n, 1), 0.0)


def _boundary(cand: Candidate, spec: GameSpec, pr: _Prober, tol: float, n_max: int = 200) -> dict:
    geo = spec.geometry
    mism, cont = [], []
    worst = 0.0
    for which, shape in ((1, geo.M1), (2, geo.M2)):
        B = geo.boundary_samples(which)
        if not len(B):
            continue
        B = B[np.all((B >= pr.lo - 1e-12) & (B <= pr.hi + 1e-12), axis=1)]
        if len(B) > n_max:
            B = B[np.linspace(0, len(B) - 1, n_max).round().astype(int)]
        if not len(B):
            continue
        want = spec.sigma_tilde(B, 0.0) if which == 1 else np.ones(len(B))
        got = cand(B)
        err = np.abs(got - want)
        worst = max(worst, float(err.max()))
        for k in np.flatnonzero(err > tol)[:10]:
            mism.append({"set": f"M{which}", "x": B[k].tolist(), "value": float(got[k]), "expected": float(want[k])})
        nrm = _inward(shape, B)
        for k, (xb, nb) in enumerate(zip(B, nrm)):
            jumps = []
            for r in pr.rungs:
                y = xb + r * nb
                if pr.admissible(y[None, :])[0]:
                    jumps.append(float(abs(cand(y[None, :])[0] - got[k])))
                else:
                    jumps.append(np.nan)
            if _persists(jumps, tol):
                cont.append({"set": f"M{which}", "x": xb.tolist(), "jumps": jumps})
    return {"max_mismatch": worst, "mismatches": mism, "discontinuities": cont[:10],
            "n_discontinuities": len(cont), "passed": not mism and not cont}


def _viscosity(kind: str, cand: Candidate, spec: GameSpec, samples, tol_visc: float,
               tol_dd: float) -> VerifierReport:
    sub = kind == "subsolution"
    sysm = spec.system
    pr = _Prober(spec, tol_dd)
    X = np.atleast_2d(np.asarray(samples, float))
    X = X[spec.geometry.in_G(X)]
    P, Q = sysm.P.points, sysm.Q.points
    z = cand(X)
    gx = sysm.cost(X)
    worst = math.inf if sub else -math.inf
    offenders, skipped = [], 0
    for k, x in enumerate(X):
        gbar = gx[k] * (z[k] - 1.0)
        V = sysm.velocities(x)  # (nP, nQ, d)
        # subsolution: for every p, sup over q-vertices; supersolution: for every q, inf over p-vertices
        outer = range(len(P)) if sub else range(len(Q))
        evaluated = False
        for i in outer:
            F = V[i] if sub else V[:, i]
            rows = pr.quotients(cand, x, F, sup=sub)
            ests = [pr.estimate(r) for r in rows]
            vals = [e.value - gbar for e in ests if e.admissible]
            if not vals:
                continue
            evaluated = True
            m = max(vals) if sub else min(vals)
            bad = m < -tol_visc if sub else m > tol_visc
            worst = min(worst, m) if sub else max(worst, m)
            if bad:
                offenders.append({"x": x.tolist(), "p" if sub else "q": (P[i] if sub else Q[i]).tolist(),
                                  "margin": m, "z": float(z[k])})
        if not evaluated:
            skipped += 1
    semi = _semicontinuity(cand, X, pr, upper=sub, tol=tol_visc)
    bnd = _boundary(cand, spec, pr, tol_visc)
    offenders.sort(key=lambda o: o["margin"], reverse=not sub)
    passed = not offenders and semi["passed"] and bnd["passed"]
    return VerifierReport(kind, cand.label, passed, len(X), skipped, float(worst), offenders[:10], bnd,
                          semi, [], {"tol_visc": tol_visc, "tol_dd": tol_dd, "ladder": pr.rungs})


def check_subsolution(cand: Candidate, spec: GameSpec, grid_samples, tol_visc: float = TOL_VISC,
                      tol_dd: float = TOL_DD) -> VerifierReport:
    """For every sample x and p: ``max_q d+v(x; f(x,p,q)) - g(x)(v(x) - 1) >= -tol_visc``.

    Also checks the upper-semicontinuity proxy and that the candidate matches
    the boundary data and is continuous there.
    """
    return _viscosity("subsolution", cand, spec, grid_samples, tol_visc, tol_dd)


def check_supersolution(cand: Candidate, spec: GameSpec, grid_samples, tol_visc: float = TOL_VISC,
                        tol_dd: float = TOL_DD) -> VerifierReport:
    """For every sample x and q: ``min_p d-v(x; f(x,p,q)) - g(x)(v(x) - 1) <= tol_visc``."""
    return _viscosity("supersolution", cand, spec, grid_samples, tol_visc, tol_dd)


def check_cond_low(spec: GameSpec, eps: float, samples, tol: float = TOL_VISC,
                   tol_dd: float = TOL_DD) -> VerifierReport:
    """Search, for every sample x0 and p, a q0 with ``b (1 - v(x0)) >= -d+v(x0; f(x0, p, q0))``.

    ``v`` is the lower candidate (1 on the eps-inflated lifeline, the
    transformed payoff extension elsewhere).
    """
    cand = subsol_candidate(spec, eps)
    sysm = spec.system
    pr = _Prober(spec, tol_dd)
    X = np.atleast_2d(np.asarray(samples, float))
    X = X[spec.geometry.in_G(X)]
    P, Q = sysm.P.points, sysm.Q.points
    v = cand(X)
    b = spec.b
    failures, witnesses = [], []
    worst, skipped = math.inf, 0
    for k, x in enumerate(X):
        V = sysm.velocities(x)
        lhs = b * (1.0 - v[k])
        any_eval = False
        for i in range(len(P)):
            ests = [pr.estimate(r) for r in pr.quotients(cand, x, V[i], sup=True)]
            margins = [(lhs + e.value, j) for j, e in enumerate(ests) if e.admissible]
            if not margins:
                continue
            any_eval = True
            m, j = max(margins)
            worst = min(worst, m)
            if m >= -tol:
                if len(witnesses) < 50:
                    witnesses.append({"x0": x.tolist(), "p": P[i].tolist(), "q0": Q[j].tolist(), "margin": m})
            else:
                failures.append({"x0": x.tolist(), "p": P[i].tolist(), "margin": m,
                                 "d_plus": [e.status if e.status != "finite" else e.value for e in ests]})
        if not any_eval:
            skipped += 1
    failures.sort(key=lambda o: o["margin"])
    return VerifierReport("cond-low", cand.label, not failures, len(X), skipped, float(worst),
                          failures[:10], {}, {}, witnesses,
                          {"eps": eps, "tol": tol, "tol_dd": tol_dd, "ladder": pr.rungs,
                           "n_failures": len(failures)})
