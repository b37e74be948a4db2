"""Space-time lattices and grid functions with a closed-form exterior."""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import ParabolicCube, check_sigma

__all__ = ["LatticeSpec", "GridFunction", "sample", "oscillation", "level_set_measure",
           "extremum", "write_csv", "read_csv", "write_binary", "read_binary"]

_MAGIC = b"NLPG"


def _as_steps(length: float, step: float, what: str) -> int:
    k = length / step
    kr = round(k)
    if kr < 1 or abs(k - kr) > 1e-9 * max(1.0, k):
        raise ValueError(f"{what}: extent {length} is not an integer multiple of step {step}")
    return int(kr)


@dataclass(frozen=True)
class LatticeSpec:
    """Uniform lattice on [-X, X]^n x [tau1, tau2].

    The node at ``tau1`` holds initial data; the time interval proper is
    (tau1, tau2].
    """

    n: int
    h_x: float
    h_t: float
    X: float = 2.0
    tau1: float = 0.0
    tau2: float = 1.0
    sigma: float = 1.0
    max_nodes: int = 50_000_000

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("only n = 1 or n = 2 is supported")
        if not (self.h_x > 0 and self.h_t > 0):
            raise ValueError("lattice steps must be positive")
        if self.X < 2 - 1e-12:
            raise ValueError("spatial extent X must be at least 2")
        if not self.tau2 > self.tau1:
            raise ValueError("empty time interval")
        check_sigma(self.sigma)
        _as_steps(self.X, self.h_x, "space")
        _as_steps(self.tau2 - self.tau1, self.h_t, "time")
        if self.num_nodes > self.max_nodes:
            raise ValueError(f"lattice has {self.num_nodes} nodes, above the cap {self.max_nodes}")

    @property
    def half_count(self) -> int:
        return _as_steps(self.X, self.h_x, "space")

    @property
    def nx(self) -> int:
        return 2 * self.half_count + 1

    @property
    def nt(self) -> int:
        return _as_steps(self.tau2 - self.tau1, self.h_t, "time") + 1

    @property
    def shape(self) -> tuple:
        return (self.nt,) + (self.nx,) * self.n

    @property
    def num_nodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def x1d(self) -> np.ndarray:
        return (np.arange(self.nx) - self.half_count) * self.h_x

    @property
    def times(self) -> np.ndarray:
        return self.tau1 + np.arange(self.nt) * self.h_t

    def space_nodes(self) -> np.ndarray:
        """Spatial nodes, shape (nx,)*n + (n,)."""
        g = np.meshgrid(*([self.x1d] * self.n), indexing="ij")
        return np.stack(g, axis=-1)

    @property
    def cell_volume(self) -> float:
        return self.h_x ** self.n * self.h_t

    def index_of(self, x) -> tuple:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return tuple(int(round(v / self.h_x)) + self.half_count for v in x)

    def with_steps(self, h_x: float, h_t: float) -> "LatticeSpec":
        return LatticeSpec(self.n, h_x, h_t, self.X, self.tau1, self.tau2, self.sigma, self.max_nodes)


Exterior = Callable[[np.ndarray, float], np.ndarray]


def constant_exterior(c: float) -> Exterior:
    def ext(x, t):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], float(c))
    ext.bound = abs(float(c))
    return ext


@dataclass
class GridFunction:
    """Node values on a lattice plus a bounded evaluator for everything outside.

    ``values`` has shape ``(nt, nx[, nx])``.  ``exterior(x, t)`` takes points
    with trailing axis n and a scalar time.
    """

    lattice: LatticeSpec
    values: np.ndarray
    exterior: Exterior = field(default_factory=lambda: constant_exterior(0.0))
    bound: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.lattice.shape:
            raise ValueError(f"values shape {v.shape} does not match lattice {self.lattice.shape}")
        bad = ~np.isfinite(v)
        if bad.any():
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise ValueError(f"non-finite value at node {idx}")
        v.setflags(write=False)
        self.values = v
        if self.bound is None:
            self.bound = getattr(self.exterior, "bound", None)

    @property
    def n(self) -> int:
        return self.lattice.n

    def node_mask(self, region: ParabolicCube) -> np.ndarray:
        lat = self.lattice
        sm = region.contains_space(lat.space_nodes())
        tm = region.contains_time(lat.times)
        return tm.reshape((-1,) + (1,) * lat.n) & sm[None]

    def evaluate_slice(self, m: int, pts: np.ndarray) -> np.ndarray:
        """Values at arbitrary points for time slice m (multilinear inside, exterior outside)."""
        return evaluate_array(self.lattice, self.values[m], self.exterior, self.lattice.times[m], pts)

    def at_node(self, x, t) -> float:
        lat = self.lattice
        m = int(round((t - lat.tau1) / lat.h_t))
        return float(self.values[(m,) + lat.index_of(x)])


def evaluate_array(lat: LatticeSpec, slice_values: np.ndarray, exterior: Exterior, t: float,
                   pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    out = np.empty(pts.shape[:-1])
    inside = np.all(np.abs(pts) <= lat.X + 1e-12, axis=-1)
    if (~inside).any():
        out[~inside] = exterior(pts[~inside], t)
    if inside.any():
        p = pts[inside]
        s = (p + lat.X) / lat.h_x
        i0 = np.clip(np.floor(s).astype(int), 0, lat.nx - 2)
        fr = s - i0
        acc = np.zeros(p.shape[0])
        for corner in np.ndindex(*(2,) * lat.n):
            w = np.ones(p.shape[0])
            idx = []
            for a, c in enumerate(corner):
                w = w * (fr[:, a] if c else 1 - fr[:, a])
                idx.append(i0[:, a] + c)
            acc += w * slice_values[tuple(idx)]
        out[inside] = acc
    return out


def sample(f: Callable, lattice: LatticeSpec, bound: float | None = None) -> GridFunction:
    """Evaluate ``f(x, t)`` on every node; ``f`` also serves as the exterior."""
    xs = lattice.space_nodes()
    vals = np.empty(lattice.shape)
    for m, t in enumerate(lattice.times):
        vals[m] = f(xs, float(t))
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = np.argwhere(bad)[0]
        x = xs[tuple(idx[1:])]
        raise ValueError(f"non-finite sample at node x={x.tolist()}, t={lattice.times[idx[0]]}")

    def ext(x, t):
        return f(np.asarray(x, dtype=float), float(t))

    ext.bound = bound
    return GridFunction(lattice, vals, ext, bound)


def _masked(u: GridFunction, region: ParabolicCube) -> np.ndarray:
    mask = u.node_mask(region)
    if not mask.any():
        raise ValueError("region contains no lattice nodes")
    return mask


def oscillation(u: GridFunction, region: ParabolicCube) -> float:
    mask = _masked(u, region)
    v = u.values[mask]
    return float(v.max() - v.min())


def level_set_measure(u: GridFunction, s: float, region: ParabolicCube, mode: str = "above") -> float:
    mask = u.node_mask(region)
    if mode == "above":
        cnt = np.count_nonzero(u.values[mask] > s)
    elif mode == "at-most":
        cnt = np.count_nonzero(u.values[mask] <= s)
    else:
        raise ValueError("mode must be 'above' or 'at-most'")
    return cnt * u.lattice.cell_volume


def extremum(u: GridFunction, region: ParabolicCube, which: str = "sup"):
    """Return ``(value, (x, t))`` for the sup or inf over nodes in ``region``."""
    mask = _masked(u, region)
    v = np.where(mask, u.values, -np.inf if which == "sup" else np.inf)
    if which == "sup":
        k = np.unravel_index(np.argmax(v), v.shape)
    elif which == "inf":
        k = np.unravel_index(np.argmin(v), v.shape)
    else:
        raise ValueError("which must be 'sup' or 'inf'")
    lat = u.lattice
    x = tuple(float(lat.x1d[i]) for i in k[1:])
    return float(u.values[k]), (x, float(lat.times[k[0]]))


# --------------------------------------------------------------------------
# Serialization


def write_csv(u: GridFunction, path) -> None:
    lat = u.lattice
    xs = lat.space_nodes().reshape(-1, lat.n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(lat.n)] + ["t", "value"])
        for m, t in enumerate(lat.times):
            vals = u.values[m].reshape(-1)
            for x, v in zip(xs, vals):
                w.writerow([repr(float(c)) for c in x] + [repr(float(t)), repr(float(v))])


def read_csv(path, lattice: LatticeSpec) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    vals = data[:, -1].reshape(lattice.shape)
    return GridFunction(lattice, vals)


# binary layout (little endian):
#   4s magic "NLPG", <i n, <i nt, <i nx, <d h_x, <d h_t, <d sigma, <d X, <d tau1,
#   then nt * nx^n float64 values in row-major (t, x1[, x2]) order
_HEADER = "<4siiiddddd"


def write_binary(u: GridFunction, path) -> None:
    lat = u.lattice
    with open(path, "wb") as fh:
        fh.write(struct.pack(_HEADER, _MAGIC, lat.n, lat.nt, lat.nx, lat.h_x, lat.h_t, lat.sigma, lat.X, lat.tau1))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_binary(path) -> GridFunction:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize(_HEADER))
        magic, n, nt, nx, h_x, h_t, sigma, X, tau1 = struct.unpack(_HEADER, head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a grid-function file")
        vals = np.frombuffer(fh.read(), dtype="<f8")
    tau2 = tau1 + (nt - 1) * h_t
    lat = LatticeSpec(n, h_x, h_t, X, tau1, tau2, sigma)
    if vals.size != lat.num_nodes:
        raise ValueError(f"{path}: truncated value block")
    return GridFunction(lat, vals.reshape(lat.shape).copy())


