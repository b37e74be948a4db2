"""Parabolic geometry: distances, space-time cubes, dyadic trees and the
Calderon-Zygmund type covering with time elongation.

Conventions for the cube family (``anchor = (x, t)``, radius ``r``):

====== =========================== ==================================
tag    space                       time
====== =========================== ==================================
Q      open ball  B_r(x)           (t - r^s, t]
rQ     open ball  B_r(x)           (t, t + r^s]
rQ-    open ball  B_r(x)           (t + r^s, t + 2 r^s)   (open)
rQ+    open ball  B_r(x)           (t + 3 r^s, t + 4 r^s) (open)
rK     open box   (x-r, x+r)^n     (t, t + r^s]
K-     open box   (x-r, x+r)^n     (t, t + r^s]
K+     open box   (x-3r, x+3r)^n   (t + r^s, t + (3^s + 2) r^s]
bQ     open ball  B_r(x)           (t - r^s, t + r^s]
====== =========================== ==================================

``K+`` built from radius ``r`` is the cube usually written with radius 3r.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Point",
    "ParabolicCube",
    "Box",
    "CubeRegion",
    "DyadicCube",
    "parabolic_distance",
    "elongation",
    "expansion",
    "elongation_breakpoints",
    "dyadic_root",
    "dyadic_split",
    "cz_decompose",
    "dyadic_to_json",
    "dyadic_from_json",
    "check_sigma",
]

VARIANTS = ("Q", "rQ", "rQ-", "rQ+", "rK", "K-", "K+", "bQ")


def check_sigma(sigma) -> None:
    s = float(sigma)
    if not (0.0 < s < 2.0) or not math.isfinite(s):
        raise ValueError(f"sigma must lie in (0, 2), got {sigma!r}")


@dataclass(frozen=True)
class Point:
    """Space-time point ``(x, t)``."""

    x: tuple
    t: float

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        if len(x) < 1:
            raise ValueError("a point needs at least one spatial coordinate")
        if not all(math.isfinite(v) for v in x) or not math.isfinite(float(self.t)):
            raise ValueError(f"non-finite coordinate in point {x}, {self.t}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return len(self.x)

    @classmethod
    def origin(cls, n: int) -> "Point":
        return cls((0.0,) * n, 0.0)


def parabolic_distance(p1: Point, p2: Point, sigma: float) -> float:
    """(|x - y|^sigma + |t - s|)^(1/sigma), infinite when p1 lies in the future of p2."""
    check_sigma(sigma)
    if p1.t > p2.t:
        return math.inf
    dx = math.dist(p1.x, p2.x)
    return (dx ** sigma + (p2.t - p1.t)) ** (1.0 / sigma)


# --------------------------------------------------------------------------
# Parabolic cubes


@dataclass(frozen=True)
class ParabolicCube:
    anchor: Point
    r: float
    sigma: float
    variant: str = "Q"

    def __post_init__(self):
        check_sigma(self.sigma)
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"radius must be positive, got {self.r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown cube variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def n(self) -> int:
        return self.anchor.n

    @property
    def shape(self) -> str:
        return "box" if self.variant in ("rK", "K-", "K+") else "ball"

    @property
    def half_width(self) -> float:
        return 3.0 * self.r if self.variant == "K+" else self.r

    def time_interval(self):
        """Return ``(lo, hi, lo_closed, hi_closed)``."""
        t, rs = self.anchor.t, self.r ** self.sigma
        v = self.variant
        if v == "Q":
            return t - rs, t, False, True
        if v in ("rQ", "rK", "K-"):
            return t, t + rs, False, True
        if v == "rQ-":
            return t + rs, t + 2 * rs, False, False
        if v == "rQ+":
            return t + 3 * rs, t + 4 * rs, False, False
        if v == "K+":
            return t + rs, t + (3 ** self.sigma + 2) * rs, False, True
        return t - rs, t + rs, False, True  # bQ

    @property
    def duration(self) -> float:
        lo, hi, _, _ = self.time_interval()
        return hi - lo

    def contains_space(self, x) -> np.ndarray:
        """Spatial membership for an array of points with trailing axis n."""
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.anchor.x)
        if self.shape == "box":
            return np.all(np.abs(d) < self.half_width, axis=-1)
        return np.sum(d * d, axis=-1) < self.half_width ** 2

    def contains_time(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lo, hi, lc, hc = self.time_interval()
        ok_lo = t >= lo if lc else t > lo
        ok_hi = t <= hi if hc else t < hi
        return ok_lo & ok_hi

    def contains(self, x, t) -> np.ndarray:
        return self.contains_space(x) & self.contains_time(t)

    def measure(self) -> float:
        w = self.half_width
        if self.shape == "box":
            vol = (2 * w) ** self.n
        else:
            vol = math.pi ** (self.n / 2) / math.gamma(self.n / 2 + 1) * w ** self.n
        return vol * self.duration

    def scaled_space(self, factor: float) -> "ParabolicCube":
        return ParabolicCube(self.anchor, self.r * factor, self.sigma, self.variant)


# --------------------------------------------------------------------------
# Boxes and exact unions


@dataclass(frozen=True)
class Box:
    """Axis-aligned space-time box ``prod (lo_i, hi_i)`` with time as the last axis."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("box bounds have different lengths")
        if any(b < a for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate box {self.lo} {self.hi}")

    @property
    def volume(self):
        v = 1
        for a, b in zip(self.lo, self.hi):
            v = v * (b - a)
        return v

    def intersect(self, other: "Box"):
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(b <= a for a, b in zip(lo, hi)):
            return None
        return Box(lo, hi)

    def contains_box(self, other: "Box") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))


@dataclass(frozen=True)
class CubeRegion:
    """Union of pairwise disjoint boxes."""

    boxes: tuple = ()

    @property
    def measure(self):
        total = 0
        for b in self.boxes:
            total = total + b.volume
        return total

    @classmethod
    def union(cls, boxes: Iterable[Box]) -> "CubeRegion":
        return cls(tuple(_disjoint_union(list(boxes))))

    def contains_region(self, other: "CubeRegion") -> bool:
        """True when ``other`` is a subset of ``self`` (up to null sets)."""
        if not other.boxes:
            return True
        inter = 0
        for a in other.boxes:
            for b in self.boxes:
                c = a.intersect(b)
                if c is not None:
                    inter = inter + c.volume
        return _close(inter, other.measure)

    def difference_measure(self, other: "CubeRegion"):
        inter = 0
        for a in self.boxes:
            for b in other.boxes:
                c = a.intersect(b)
                if c is not None:
                    inter = inter + c.volume
        return self.measure - inter


def _close(a, b) -> bool:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a == b
    return abs(float(a) - float(b)) <= 1e-12 * max(1.0, abs(float(b)))


def _disjoint_union(boxes: list) -> list:
    """Coordinate compression: split the union into disjoint boxes, merged along time."""
    if not boxes:
        return []
    d = len(boxes[0].lo)
    cuts = [sorted(set([b.lo[k] for b in boxes] + [b.hi[k] for b in boxes])) for k in range(d)]
    pos = [{c: i for i, c in enumerate(ck)} for ck in cuts]
    shape = tuple(len(c) - 1 for c in cuts)
    covered = np.zeros(shape, dtype=bool)
    for b in boxes:
        sl = tuple(slice(pos[k][b.lo[k]], pos[k][b.hi[k]]) for k in range(d))
        covered[sl] = True
    out = []
    # merge runs along the last (time) axis
    for idx in itertools.product(*[range(s) for s in shape[:-1]]):
        col = covered[idx]
        k = 0
        while k < len(col):
            if not col[k]:
                k += 1
                continue
            j = k
            while j < len(col) and col[j]:
                j += 1
            lo = tuple(cuts[a][idx[a]] for a in range(d - 1)) + (cuts[-1][k],)
            hi = tuple(cuts[a][idx[a] + 1] for a in range(d - 1)) + (cuts[-1][j],)
            out.append(Box(lo, hi))
            k = j
    return out


# --------------------------------------------------------------------------
# Elongation / expansion


def _pow3(sigma, i: int):
    """3^(sigma i), exact when sigma is an integer-valued Fraction."""
    if isinstance(sigma, Fraction) and sigma.denominator == 1:
        return Fraction(3) ** (int(sigma) * i)
    return 3.0 ** (float(sigma) * i)


def elongation_breakpoints(m: int, sigma, time_len=1):
    """Offsets ``(3^{sigma i} - 1)/(3^sigma - 1) * time_len`` for ``i = 0..m+1``."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    denom = _pow3(sigma, 1) - 1
    return [(_pow3(sigma, i) - 1) / denom * time_len for i in range(m + 2)]


def _forward_box_data(k):
    if isinstance(k, DyadicCube):
        return k.center_fraction(), k.half_width, k.t_lo, k.time_length, k.sigma
    if not isinstance(k, ParabolicCube) or k.variant not in ("rK", "K-"):
        raise ValueError("elongation needs a forward box cube (variant rK or K-)")
    return k.anchor.x, k.r, k.anchor.t, k.r ** k.sigma, k.sigma


def _stack(k, m: int, grow: bool) -> CubeRegion:
    x, r, t0, tl, sigma = _forward_box_data(k)
    bps = elongation_breakpoints(m, sigma, tl)
    boxes = []
    for i in range(m + 1):
        w = r * (3 ** i if grow else 1)
        lo = tuple(c - w for c in x) + (t0 + bps[i],)
        hi = tuple(c + w for c in x) + (t0 + bps[i + 1],)
        boxes.append(Box(lo, hi))
    if grow:
        return CubeRegion.union(boxes)
    return CubeRegion(tuple(boxes))


def elongation(k, m: int) -> CubeRegion:
    """Stack of m+1 boxes above the cube with the cube's spatial section.

    Box i has time length 3^{sigma i} times the cube's own time length.
    """
    return _stack(k, m, grow=False)


def expansion(k, m: int) -> CubeRegion:
    """As :func:`elongation` but box i has spatial half-width 3^i r."""
    return _stack(k, m, grow=True)


# --------------------------------------------------------------------------
# Dyadic cubes on the root (-1, 1)^n x (0, 1]


@dataclass(frozen=True)
class DyadicCube:
    depth: int
    index: tuple  # spatial indices then the time index
    rule: tuple = (1, 1)
    sigma: object = Fraction(1)
    parent: "DyadicCube | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        p, q = self.rule
        if p < 1 or q < 1:
            raise ValueError("split rule needs p, q >= 1")
        nsp = 2 ** (q * self.depth)
        nt = 2 ** (p * self.depth)
        idx = tuple(int(i) for i in self.index)
        object.__setattr__(self, "index", idx)
        if any(not (0 <= i < nsp) for i in idx[:-1]) or not (0 <= idx[-1] < nt):
            raise ValueError(f"index {idx} out of range at depth {self.depth}")

    @property
    def n(self) -> int:
        return len(self.index) - 1

    @property
    def half_width(self) -> Fraction:
        return Fraction(1, 2 ** (self.rule[1] * self.depth))

    @property
    def time_length(self) -> Fraction:
        return Fraction(1, 2 ** (self.rule[0] * self.depth))

    @property
    def t_lo(self) -> Fraction:
        return self.index[-1] * self.time_length

    def center_fraction(self) -> tuple:
        w = self.half_width
        return tuple(-1 + (2 * i + 1) * w for i in self.index[:-1])

    def box(self) -> Box:
        w = self.half_width
        c = self.center_fraction()
        lo = tuple(ci - w for ci in c) + (self.t_lo,)
        hi = tuple(ci + w for ci in c) + (self.t_lo + self.time_length,)
        return Box(lo, hi)

    @property
    def measure(self) -> Fraction:
        return self.box().volume

    def ancestor(self, depth: int) -> "DyadicCube":
        if depth > self.depth:
            raise ValueError("ancestor depth exceeds cube depth")
        p, q = self.rule
        ds = self.depth - depth
        idx = tuple(i >> (q * ds) for i in self.index[:-1]) + (self.index[-1] >> (p * ds),)
        return DyadicCube(depth, idx, self.rule, self.sigma)


def dyadic_root(n: int, rule=(1, 1), sigma=Fraction(1)) -> DyadicCube:
    return DyadicCube(0, (0,) * (n + 1), tuple(rule), sigma)


def dyadic_split(k: DyadicCube, rule=None, n: int | None = None) -> list:
    """Children of ``k``: 2^q pieces per spatial axis and 2^p in time."""
    rule = tuple(rule) if rule is not None else k.rule
    if tuple(rule) != tuple(k.rule):
        raise ValueError("split rule must match the tree's rule")
    if n is not None and n != k.n:
        raise ValueError("dimension mismatch")
    p, q = rule
    ranges = [range(i << q, (i + 1) << q) for i in k.index[:-1]]
    ranges.append(range(k.index[-1] << p, (k.index[-1] + 1) << p))
    return [DyadicCube(k.depth + 1, idx, k.rule, k.sigma, parent=k) for idx in itertools.product(*ranges)]


def _indicator(cubes: Sequence[DyadicCube], n: int, rule, depth: int) -> np.ndarray:
    p, q = rule
    shape = (2 ** (q * depth),) * n + (2 ** (p * depth),)
    a = np.zeros(shape, dtype=np.int64)
    for c in cubes:
        ds = depth - c.depth
        sl = tuple(slice(i << (q * ds), (i + 1) << (q * ds)) for i in c.index[:-1])
        sl += (slice(c.index[-1] << (p * ds), (c.index[-1] + 1) << (p * ds)),)
        a[sl] = 1
    return a


def _coarsen(a: np.ndarray, n: int, p: int, q: int) -> np.ndarray:
    shape = []
    for s in a.shape[:-1]:
        shape += [s >> q, 1 << q]
    shape += [a.shape[-1] >> p, 1 << p]
    return a.reshape(shape).sum(axis=tuple(range(1, 2 * (n + 1), 2)))


def cz_decompose(a: Sequence[DyadicCube], delta, m: int, mode: str = "clipped", n: int | None = None,
                 rule=None, sigma=None):
    """Select maximal dyadic cubes with density of ``a`` at least ``delta`` and
    return them with the union of their m-step time elongations.

    ``mode="clipped"`` clips the elongations to |x^i| <= 1; ``mode="shifted"``
    uses the shifted elongation of each cube (identical boxes for dyadic cubes).
    Measures are exact Fractions when sigma is an integer.
    """
    delta = Fraction(delta) if not isinstance(delta, float) else delta
    if not (0 < delta < 1):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if mode not in ("clipped", "shifted"):
        raise ValueError("mode must be 'clipped' or 'shifted'")
    a = list(a)
    if a:
        n = a[0].n
        rule = a[0].rule
        sigma = a[0].sigma
    if n is None:
        raise ValueError("empty set needs an explicit dimension")
    rule = tuple(rule or (1, 1))
    sigma = Fraction(1) if sigma is None else sigma
    if not a:
        return [], CubeRegion(())
    p, q = rule
    depth = max(c.depth for c in a)
    counts = [_indicator(a, n, rule, depth)]
    for _ in range(depth):
        counts.append(_coarsen(counts[-1], n, p, q))
    counts = counts[::-1]  # counts[d] = number of finest cells of A inside each depth-d cube
    cells_per = [(2 ** (q * n + p)) ** (depth - d) for d in range(depth + 1)]

    selected = []

    def visit(cube: DyadicCube):
        c = int(counts[cube.depth][cube.index])
        if c == 0:
            return
        if Fraction(c, cells_per[cube.depth]) >= delta:
            selected.append(cube)
            return
        for ch in dyadic_split(cube):
            visit(ch)

    visit(dyadic_root(n, rule, sigma))

    boxes = []
    clip = Box((Fraction(-1),) * n + (Fraction(-10**9),), (Fraction(1),) * n + (Fraction(10**9),))
    for c in selected:
        for b in elongation(c, m).boxes:
            if mode == "clipped":
                b = b.intersect(_as_num_box(clip, b))
                if b is None:
                    continue
            boxes.append(b)
    return selected, CubeRegion.union(boxes)


def _as_num_box(clip: Box, like: Box) -> Box:
    if all(isinstance(v, Fraction) for v in like.lo + like.hi):
        return clip
    return Box(tuple(float(v) for v in clip.lo), tuple(float(v) for v in clip.hi))


def union_measure(cubes: Sequence[DyadicCube]):
    return CubeRegion.union([c.box() for c in cubes]).measure


# --------------------------------------------------------------------------
# JSON


def _sigma_json(sigma):
    if isinstance(sigma, Fraction):
        return int(sigma) if sigma.denominator == 1 else str(sigma)
    return float(sigma)


def dyadic_to_json(cubes: Sequence[DyadicCube], sigma=None, rule=None) -> str:
    cubes = list(cubes)
    sigma = sigma if sigma is not None else (cubes[0].sigma if cubes else Fraction(1))
    rule = rule if rule is not None else (cubes[0].rule if cubes else (1, 1))
    doc = {
        "sigma": _sigma_json(sigma),
        "rule": [int(rule[0]), int(rule[1])],
        "cubes": [{"depth": c.depth, "index": list(c.index)} for c in cubes],
    }
    return json.dumps(doc, sort_keys=True)


def dyadic_from_json(text: str) -> list:
    doc = json.loads(text)
    s = doc["sigma"]
    sigma = Fraction(s) if isinstance(s, (int, str)) else float(s)
    rule = tuple(doc["rule"])
    return [DyadicCube(c["depth"], tuple(c["index"]), rule, sigma) for c in doc["cubes"]]
