"""Exit sets, their inflations, and the boundary payoff.

Sets are implicit: every shape exposes a signed distance (negative inside,
zero on the boundary, positive outside) from which membership, distance to
the set, distance to its boundary and inflation all follow. Shapes are
closed, so membership includes the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TOL_GEOM = 1e-9
TOL_SEP = 1e-9


class GeometryError(ValueError):
    pass


def _as_points(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


class Shape:
    """Base class of the closed shape registry."""

    dim: int

    def sdf(self, x) -> np.ndarray:
        raise NotImplementedError

    def distance(self, x) -> np.ndarray:
        """Euclidean distance to the set (zero inside)."""
        return np.maximum(self.sdf(x), 0.0)

    def boundary_distance(self, x) -> np.ndarray:
        return np.abs(self.sdf(x))

    def contains(self, x, tol: float = TOL_GEOM) -> np.ndarray:
        return self.sdf(x) <= tol

    def project(self, x) -> np.ndarray:
        """Nearest point of the boundary."""
        raise NotImplementedError

    def boundary_samples(self, n: int, box: "Box") -> np.ndarray:
        """Roughly ``n`` points of the boundary lying inside ``box``."""
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise GeometryError("ball radius must be >= 0")

    @property
    def dim(self) -> int:
        return len(self.center)

    def sdf(self, x):
        x = _as_points(x)
        return np.linalg.norm(x - np.asarray(self.center), axis=-1) - self.radius

    def project(self, x):
        x = _as_points(x)
        c = np.asarray(self.center)
        d = x - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        # at the center every boundary point is nearest; pick the first axis
        fallback = np.zeros_like(d)
        fallback[..., 0] = 1.0
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r > 0, d / np.where(r > 0, r, 1.0), fallback)
        return c + self.radius * unit

    def boundary_samples(self, n, box):
        c = np.asarray(self.center, dtype=float)
        if self.radius == 0.0:
            pts = c[None, :]
        elif self.dim == 1:
            pts = np.array([[c[0] - self.radius], [c[0] + self.radius]])
        elif self.dim == 2:
            ang = 2 * np.pi * np.arange(n) / n
            pts = c + self.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        else:
            rng = np.random.default_rng(0)
            v = rng.standard_normal((n, self.dim))
            pts = c + self.radius * v / np.linalg.norm(v, axis=1, keepdims=True)
        return pts[box.contains(pts)]

    def describe(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box(Shape):
    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise GeometryError("box lo/hi dimension mismatch")
        if any(h < l for l, h in zip(self.lo, self.hi)):
            raise GeometryError("box requires lo <= hi on every axis")

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def sdf(self, x):
        x = _as_points(x)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        c, half = (lo + hi) / 2, (hi - lo) / 2
        q = np.abs(x - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def project(self, x):
        x = _as_points(x)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        clipped = np.clip(x, lo, hi)
        # interior points: push to the closest face
        to_lo, to_hi = x - lo, hi - x
        margin = np.minimum(to_lo, to_hi)
        axis = np.argmin(margin, axis=-1)
        face = np.where(
            np.take_along_axis(to_lo, axis[..., None], -1)
            <= np.take_along_axis(to_hi, axis[..., None], -1),
            np.take_along_axis(np.broadcast_to(lo, x.shape), axis[..., None], -1),
            np.take_along_axis(np.broadcast_to(hi, x.shape), axis[..., None], -1),
        )
        pushed = x.copy()
        np.put_along_axis(pushed, axis[..., None], face, -1)
        inside = (self.sdf(x) < 0)[..., None]
        return np.where(inside, pushed, clipped)

    def boundary_samples(self, n, box):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if self.dim == 1:
            pts = np.array([[lo[0]], [hi[0]]])
        else:
            per_face = max(2, n // (2 * self.dim))
            rng = np.random.default_rng(0)
            chunks = []
            for a in range(self.dim):
                for val in (lo[a], hi[a]):
                    u = rng.uniform(lo, hi, size=(per_face, self.dim))
                    u[:, a] = val
                    chunks.append(u)
            pts = np.concatenate(chunks)
        return pts[box.contains(pts)]

    def describe(self):
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}


@dataclass(frozen=True)
class HalfSpace(Shape):
    """The closed half-space ``{x : <normal, x> <= offset}``."""

    normal: tuple
    offset: float

    def __post_init__(self):
        if np.linalg.norm(self.normal) == 0:
            raise GeometryError("half-space normal must be non-zero")

    @property
    def dim(self) -> int:
        return len(self.normal)

    def _unit(self):
        n = np.asarray(self.normal, dtype=float)
        nn = np.linalg.norm(n)
        return n / nn, self.offset / nn

    def sdf(self, x):
        n, off = self._unit()
        return _as_points(x) @ n - off

    def project(self, x):
        n, _ = self._unit()
        x = _as_points(x)
        return x - self.sdf(x)[..., None] * n

    def boundary_samples(self, n, box):
        nu, off = self._unit()
        base = off * nu
        if self.dim == 1:
            pts = base[None, :]
        elif self.dim == 2:
            t = np.array([-nu[1], nu[0]])
            span = box.diameter + np.linalg.norm(np.asarray(box.lo) - base) + 1.0
            s = np.linspace(-span, span, 8 * n)
            pts = base + s[:, None] * t
            pts = pts[box.contains(pts)]
            if len(pts) > n:
                pts = pts[np.linspace(0, len(pts) - 1, n).astype(int)]
            return pts
        else:
            rng = np.random.default_rng(0)
            u = rng.uniform(box.lo, box.hi, size=(n, self.dim))
            pts = self.project(u)
        return pts[box.contains(pts)]

    def describe(self):
        return {"kind": "halfspace", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True)
class Complement(Shape):
    """Closure of the complement of ``inner``."""

    inner: Shape

    @property
    def dim(self) -> int:
        return self.inner.dim

    def sdf(self, x):
        return -self.inner.sdf(x)

    def project(self, x):
        return self.inner.project(x)

    def boundary_samples(self, n, box):
        return self.inner.boundary_samples(n, box)

    def describe(self):
        return {"kind": "complement", "of": self.inner.describe()}


@dataclass(frozen=True)
class Union(Shape):
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise GeometryError("union needs at least one part")
        if len({p.dim for p in self.parts}) != 1:
            raise GeometryError("union parts must share a dimension")

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def sdf(self, x):
        return np.min(np.stack([p.sdf(x) for p in self.parts]), axis=0)

    def project(self, x):
        x = _as_points(x)
        cands = np.stack([p.project(x) for p in self.parts])
        dist = np.linalg.norm(cands - x, axis=-1)
        on_bdry = np.abs(self.sdf(cands)) <= 1e-7
        dist = np.where(on_bdry, dist, np.inf)
        # no component projection on the union boundary: take the nearest anyway
        fallback = ~np.isfinite(dist).any(axis=0)
        dist = np.where(fallback, np.linalg.norm(cands - x, axis=-1), dist)
        best = np.argmin(dist, axis=0)
        return np.take_along_axis(cands, best[None, ..., None], 0)[0]

    def boundary_samples(self, n, box):
        per = max(1, n // len(self.parts))
        pts = np.concatenate([p.boundary_samples(per, box) for p in self.parts])
        return pts[np.abs(self.sdf(pts)) <= 1e-7]

    def describe(self):
        return {"kind": "union", "parts": [p.describe() for p in self.parts]}


@dataclass(frozen=True)
class Inflated(Shape):
    """All points within ``eps`` of ``inner`` (the set itself included)."""

    inner: Shape
    eps: float

    @property
    def dim(self) -> int:
        return self.inner.dim

    def sdf(self, x):
        # exact outside the inflated set; negative inside it
        return self.inner.sdf(x) - self.eps

    def project(self, x):
        x = _as_points(x)
        p = self.inner.project(x)
        d = x - p
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        outward = np.where((self.inner.sdf(x) >= 0)[..., None], 1.0, -1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r > 0, outward * d / np.where(r > 0, r, 1.0), 0.0)
        return p + self.eps * unit

    def boundary_samples(self, n, box):
        raise NotImplementedError("boundary sampling of inflated sets is not needed")

    def describe(self):
        return {"kind": "inflated", "eps": self.eps, "of": self.inner.describe()}


def inflate(shape: Shape, eps: float) -> Shape:
    if eps < 0:
        raise GeometryError(f"inflation radius must be >= 0, got {eps}")
    if eps == 0:
        return shape
    return Inflated(shape, float(eps))


def shape_from_dict(d: dict) -> Shape:
    kind = d.get("kind")
    if kind == "ball":
        return Ball(tuple(float(v) for v in d["center"]), float(d["radius"]))
    if kind == "point":
        return Ball(tuple(float(v) for v in d["at"]), 0.0)
    if kind == "box":
        return Box(tuple(float(v) for v in d["lo"]), tuple(float(v) for v in d["hi"]))
    if kind == "halfspace":
        return HalfSpace(tuple(float(v) for v in d["normal"]), float(d["offset"]))
    if kind == "complement":
        return Complement(shape_from_dict(d["of"]))
    if kind == "union":
        return Union(tuple(shape_from_dict(p) for p in d["parts"]))
    raise GeometryError(f"unknown shape kind {kind!r}")


def _boundary_count(dim: int) -> int:
    return 256 if dim == 1 else 4096


@dataclass(frozen=True)
class DomainGeometry:
    """Target set M1, lifeline M2 and the computational box.

    The game domain is the open set outside both exit sets.
    """

    M1: Shape
    M2: Shape
    box: Box
    n_boundary: int = 0
    separation: float = field(init=False)

    def __post_init__(self):
        if not (self.M1.dim == self.M2.dim == self.box.dim):
            raise GeometryError("M1, M2 and box must share a dimension")
        if self.n_boundary <= 0:
            object.__setattr__(self, "n_boundary", _boundary_count(self.dim))
        sep = self._sampled_separation()
        if not sep > TOL_SEP:
            raise GeometryError(
                f"d(M1, M2) = {sep:.3g} must be positive; the exit sets overlap or touch"
            )
        object.__setattr__(self, "separation", sep)

    @property
    def dim(self) -> int:
        return self.box.dim

    def _sampled_separation(self) -> float:
        b1 = self.M1.boundary_samples(self.n_boundary, self.box)
        b2 = self.M2.boundary_samples(self.n_boundary, self.box)
        cands = []
        if len(b1):
            cands.append(float(np.min(self.M2.distance(b1))))
        if len(b2):
            cands.append(float(np.min(self.M1.distance(b2))))
        return min(cands) if cands else math.inf

    def in_G(self, x) -> np.ndarray:
        return (self.M1.sdf(x) > 0) & (self.M2.sdf(x) > 0)

    def check_eps(self, eps: float) -> None:
        if eps < 0:
            raise GeometryError("eps must be >= 0")
        if not 3 * eps < self.separation:
            raise GeometryError(
                f"eps={eps} is not admissible: need 3*eps < d(M1, M2) = {self.separation:.6g}"
            )

    def boundary_samples(self, which: int) -> np.ndarray:
        shape = self.M1 if which == 1 else self.M2
        return shape.boundary_samples(self.n_boundary, self.box)


# -- boundary payoff ---------------------------------------------------------


@dataclass(frozen=True)
class BoundaryPayoff:
    """Terminal payoff sigma on the target boundary.

    ``kind`` is one of ``constant`` (``value``), ``affine``
    (``slope . x + value``) or ``radial`` (``value + slope * |x - center|``).
    """

    kind: str
    params: dict
    Sigma: float
    L: float

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "radial"):
            raise GeometryError(f"unknown payoff kind {self.kind!r}")
        if self.Sigma < 0:
            raise GeometryError("payoff bound Sigma must be >= 0")
        if self.L < 0:
            raise GeometryError("payoff Lipschitz constant L must be >= 0")

    def __call__(self, y) -> np.ndarray:
        y = _as_points(y)
        p = self.params
        if self.kind == "constant":
            return np.full(y.shape[:-1], float(p.get("value", 0.0)))
        if self.kind == "affine":
            return y @ np.asarray(p["slope"], float) + float(p.get("value", 0.0))
        r = np.linalg.norm(y - np.asarray(p["center"], float), axis=-1)
        return float(p.get("value", 0.0)) + float(p["slope"]) * r

    def natural_lipschitz(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "affine":
            return float(np.linalg.norm(self.params["slope"]))
        return abs(float(self.params["slope"]))

    def validate(self, samples: np.ndarray, tol: float = TOL_GEOM) -> None:
        if len(samples) == 0:
            return
        vals = self(samples)
        if vals.min() < -tol or vals.max() > self.Sigma + tol:
            raise GeometryError(
                f"sigma leaves [0, Sigma={self.Sigma}] on the target boundary "
                f"(range [{vals.min():.6g}, {vals.max():.6g}])"
            )
        sub = samples[:: max(1, len(samples) // 256)]
        vs = self(sub)
        dist = np.linalg.norm(sub[:, None] - sub[None, :], axis=-1)
        dv = np.abs(vs[:, None] - vs[None, :])
        bad = dv > self.L * dist + 1e-9
        if bad.any():
            raise GeometryError(f"sigma is not {self.L}-Lipschitz on the target boundary")


@dataclass(frozen=True, eq=False)
class SigmaExtension:
    """Lipschitz extension of sigma off the target boundary.

    ``sup`` over the boundary is taken over a fixed sample of it together with
    the nearest boundary point of every query. On the inflated lifeline the
    extension is ``+inf``.
    """

    payoff: BoundaryPayoff
    geometry: DomainGeometry
    eps: float
    samples: np.ndarray

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x)
        flat = x.reshape(-1, x.shape[-1])
        out = np.empty(len(flat))
        L = self.payoff.L
        if self.payoff.kind == "constant":
            # sup over boundary points y of c - L|x - y| is c - L dist(x, boundary)
            c = float(self.payoff.params.get("value", 0.0))
            out = np.maximum(c - L * self.geometry.M1.boundary_distance(flat), 0.0)
            out[self.geometry.M2.distance(flat) <= self.eps + TOL_GEOM] = np.inf
            return out.reshape(x.shape[:-1])
        sv = self.payoff(self.samples) if len(self.samples) else np.empty(0)
        chunk = max(1, 2_000_000 // max(1, len(self.samples)))
        for i in range(0, len(flat), chunk):
            blk = flat[i : i + chunk]
            proj = self.geometry.M1.project(blk)
            best = self.payoff(proj) - L * np.linalg.norm(blk - proj, axis=-1)
            if len(self.samples):
                d = np.linalg.norm(blk[:, None, :] - self.samples[None, :, :], axis=-1)
                best = np.maximum(best, np.max(sv[None, :] - L * d, axis=1))
            out[i : i + chunk] = np.maximum(best, 0.0)
        lifeline = self.geometry.M2.distance(flat) <= self.eps + TOL_GEOM
        out[lifeline] = np.inf
        return out.reshape(x.shape[:-1])

    def tilde(self, x) -> np.ndarray:
        """Kruzhkov transform of the extension (1 on the inflated lifeline)."""
        return kruzhkov(self(x))


def extend_sigma(bp: BoundaryPayoff, geo: DomainGeometry, eps: float = 0.0) -> SigmaExtension:
    if eps < 0:
        raise GeometryError("eps must be >= 0")
    samples = geo.boundary_samples(1)
    return SigmaExtension(bp, geo, float(eps), np.asarray(samples, float))


# -- Kruzhkov transform ------------------------------------------------------


def kruzhkov(phi):
    """Map ``phi in [0, inf]`` to ``1 - exp(-phi)`` in ``[0, 1]``."""
    arr = np.asarray(phi, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise ValueError("kruzhkov expects phi >= 0")
    out = -np.expm1(-arr)
    return float(out) if out.ndim == 0 else out


def kruzhkov_inv(u):
    """Inverse transform ``-log(1 - u)``; ``u == 1`` maps to ``inf``."""
    arr = np.asarray(u, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise ValueError("kruzhkov_inv expects u in [0, 1]")
    with np.errstate(divide="ignore"):
        out = -np.log1p(-arr)
    return float(out) if out.ndim == 0 else out


__all__ = [
    "TOL_GEOM",
    "Shape",
    "Ball",
    "Box",
    "HalfSpace",
    "Complement",
    "Union",
    "Inflated",
    "inflate",
    "shape_from_dict",
    "DomainGeometry",
    "BoundaryPayoff",
    "SigmaExtension",
    "extend_sigma",
    "kruzhkov",
    "kruzhkov_inv",
    "GeometryError",
]
