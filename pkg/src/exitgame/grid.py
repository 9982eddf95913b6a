"""Regular Cartesian grid, node classification, value storage and interpolation."""

from __future__ import annotations

import enum
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import DomainGeometry, GeometryError


class NodeClass(enum.IntEnum):
    INTERIOR = 0
    TARGET = 1
    LIFELINE = 2
    BOX_EDGE = 3


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    shape: tuple

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.shape)):
            raise ValueError("grid lo/hi/shape dimension mismatch")
        if any(n < 2 for n in self.shape):
            raise ValueError("grid needs at least 2 nodes per axis")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise ValueError("grid needs hi > lo on every axis")
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / (np.asarray(self.shape) - 1)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def strides(self) -> np.ndarray:
        """Flat-index stride of every axis (C order)."""
        s = np.ones(self.dim, dtype=np.int64)
        for a in range(self.dim - 2, -1, -1):
            s[a] = s[a + 1] * self.shape[a + 1]
        return s

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(l, h, n) for l, h, n in zip(self.lo, self.hi, self.shape)]

    def coords(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(flat), self.shape), axis=-1)

    def nearest_index(self, x) -> np.ndarray:
        """Flat index of the nearest node (points are clipped into the box)."""
        x = np.asarray(x, float)
        k = np.rint((x - np.asarray(self.lo)) / self.h).astype(np.int64)
        k = np.clip(k, 0, np.asarray(self.shape) - 1)
        return k @ self.strides

    def on_box_edge(self) -> np.ndarray:
        idx = self.multi_index(np.arange(self.size))
        return np.any((idx == 0) | (idx == np.asarray(self.shape) - 1), axis=1)

    def describe(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "shape": list(self.shape)}


def classify(grid: Grid, geo: DomainGeometry) -> np.ndarray:
    """Class code of every node (flat order)."""
    x = grid.coords()
    in1 = geo.M1.contains(x)
    in2 = geo.M2.contains(x)
    if np.any(in1 & in2):
        k = int(np.argmax(in1 & in2))
        raise GeometryError(f"node {k} at {x[k].tolist()} lies in both M1 and M2")
    cls = np.full(grid.size, NodeClass.INTERIOR, dtype=np.int8)
    cls[grid.on_box_edge()] = NodeClass.BOX_EDGE
    cls[in1] = NodeClass.TARGET
    cls[in2] = NodeClass.LIFELINE
    return cls


@dataclass(eq=False)
class ValueField:
    """Kruzhkov-transformed value sampled on a grid (flat C order)."""

    grid: Grid
    u: np.ndarray
    classes: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float).reshape(self.grid.size)

    def as_array(self) -> np.ndarray:
        return self.u.reshape(self.grid.shape)

    def __call__(self, x) -> np.ndarray:
        return interpolate(self, x)


def interpolate(vf: ValueField, x) -> np.ndarray | float:
    """Multilinear interpolation; points outside the box get the box-edge value 1."""
    g = vf.grid
    x = np.asarray(x, float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    lo, h, n = np.asarray(g.lo), g.h, np.asarray(g.shape)
    t = (pts - lo) / h
    slack = 1e-9
    inside = np.all((t >= -slack) & (t <= n - 1 + slack), axis=1)
    t = np.clip(t, 0, n - 1)
    k = np.minimum(np.floor(t).astype(np.int64), n - 2)
    w = t - k
    strides = g.strides
    base = k @ strides
    out = np.zeros(len(pts))
    for corner in range(1 << g.dim):
        bits = np.array([(corner >> a) & 1 for a in range(g.dim)])
        wt = np.prod(np.where(bits, w, 1.0 - w), axis=1)
        out += wt * vf.u[base + bits @ strides]
    out = np.where(inside, np.clip(out, 0.0, 1.0), 1.0)
    return float(out[0]) if scalar else out


# -- CSV export -------------------------------------------------------------

_HEADER = "# exitgame value field "


def write_csv(vf: ValueField, path) -> None:
    meta = {"grid": vf.grid.describe(), **vf.meta}
    buf = io.StringIO()
    buf.write(_HEADER + json.dumps(meta, sort_keys=True, default=float) + "\n")
    names = [f"x{a}" for a in range(vf.grid.dim)] + ["u"]
    buf.write(",".join(names) + "\n")
    coords = vf.grid.coords()
    for row, val in zip(coords, vf.u):
        buf.write(",".join(format(v, ".17g") for v in (*row, val)) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def read_csv(path) -> ValueField:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(_HEADER):
        raise ValueError(f"{path}: not an exitgame value field")
    meta = json.loads(lines[0][len(_HEADER):])
    gd = meta.pop("grid")
    grid = Grid(tuple(gd["lo"]), tuple(gd["hi"]), tuple(gd["shape"]))
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:] if ln])
    if data.shape != (grid.size, grid.dim + 1):
        raise ValueError(f"{path}: expected {grid.size} rows of {grid.dim + 1} columns")
    return ValueField(grid, data[:, -1], None, meta)
