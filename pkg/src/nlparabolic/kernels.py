"""Kernels of the admissible class and quadrature weight tables.

A weight table discretizes

    L u(x) = integral over R^n of (u(x+y) + u(x-y) - 2u(x)) k(y) dy

as a sum over lattice offsets inside the truncation radius, a local
second-difference term for the origin cell, and a radial tail beyond the
truncation radius.  Every piece is a positive quadrature of k with nodes
that do not depend on k, so tables built from ordered kernels are ordered
entry by entry.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from .geometry import check_sigma
from .gridfn import LatticeSpec

__all__ = ["KernelSpec", "WeightTable", "extremal_kernel", "interpolated_kernel", "validate_bounds",
           "smoothness_seminorm", "build_weight_table", "TailGrid", "tail_grid"]


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric kernel ``k(y)`` with ellipticity bounds ``lam <= Lam``.

    ``kernel`` maps an array of points with trailing axis ``n`` to values.
    ``name`` identifies the kernel in cache keys and reports.
    """

    sigma: float
    lam: float
    Lam: float
    kernel: Callable
    n: int = 1
    class_tag: str = "L0"
    eps1: float | None = None
    name: str = "custom"
    breakpoints: tuple = ()

    def __post_init__(self):
        check_sigma(self.sigma)
        if not (self.lam > 0 and self.Lam >= self.lam):
            raise ValueError(f"need 0 < lam <= Lam, got {self.lam}, {self.Lam}")
        if self.class_tag not in ("L0", "L1"):
            raise ValueError("class_tag must be L0 or L1")
        if self.class_tag == "L1" and not (self.eps1 and self.eps1 > 0):
            raise ValueError("L1 kernels need a positive eps1")

    def __call__(self, y) -> np.ndarray:
        return self.kernel(np.asarray(y, dtype=float))

    def bound(self, y, c) -> np.ndarray:
        """(2 - sigma) c |y|^(-n-sigma)."""
        r = np.linalg.norm(np.asarray(y, dtype=float), axis=-1)
        return ((2 - self.sigma) * c) * r ** (-self.n - self.sigma)


def extremal_kernel(sigma: float, c: float, n: int = 1, lam=None, Lam=None) -> KernelSpec:
    check_sigma(sigma)
    if not c > 0:
        raise ValueError("kernel constant must be positive")
    coef = (2 - sigma) * c

    def k(y):
        r = np.linalg.norm(y, axis=-1)
        return coef * r ** (-n - sigma)

    return KernelSpec(sigma, lam if lam is not None else c, Lam if Lam is not None else c, k, n,
                      name=f"power(sigma={sigma!r},c={c!r},n={n})")


def interpolated_kernel(sigma: float, lam: float, Lam: float, n: int = 1, shape: Callable | None = None,
                        name: str | None = None) -> KernelSpec:
    """k = (2-sigma)(lam + (Lam-lam) s(y)) |y|^(-n-sigma) with 0 <= s <= 1 and s even.

    The default ``s`` is (1 + sin|y|)/2.
    """
    if shape is None:
        def shape(y):
            return (1 + np.sin(np.linalg.norm(y, axis=-1))) / 2
        name = name or "sin-interp"

    def k(y):
        r = np.linalg.norm(y, axis=-1)
        s = np.clip(shape(y), 0.0, 1.0)
        return ((2 - sigma) * (lam + (Lam - lam) * s)) * r ** (-n - sigma)

    return KernelSpec(sigma, lam, Lam, k, n, name=name or "interp")


def validate_bounds(K: KernelSpec, samples) -> dict:
    y = np.asarray(samples, dtype=float).reshape(-1, K.n)
    if np.any(np.linalg.norm(y, axis=-1) == 0):
        raise ValueError("samples must be nonzero")
    val = K(y)
    lo, hi = K.bound(y, K.lam), K.bound(y, K.Lam)
    bad = np.nonzero((val < lo) | (val > hi) | ~np.isfinite(val))[0]
    sym = np.nonzero(K(-y) != val)[0]
    violations = [{"y": y[i].tolist(), "k": float(val[i]), "lower": float(lo[i]), "upper": float(hi[i])}
                  for i in bad]
    return {"passed": bool(len(bad) == 0 and len(sym) == 0), "violations": violations,
            "asymmetric": [y[i].tolist() for i in sym], "checked": int(len(y))}


def smoothness_seminorm(K: KernelSpec, eps1: float, h_samples, tol: float = 1e-7) -> float:
    """max over h of  int_{|y| > 2 eps1} |k(y) - k(y-h)| / |h| dy  (n = 1 or 2)."""
    if not eps1 > 0:
        raise ValueError("eps1 must be positive")
    best = 0.0
    for h in h_samples:
        h = np.atleast_1d(np.asarray(h, dtype=float))
        if h.shape != (K.n,):
            raise ValueError("h sample has the wrong dimension")
        hn = float(np.linalg.norm(h))
        if not 0 < hn < eps1:
            raise ValueError(f"need 0 < |h| < eps1, got |h|={hn}")
        if K.n == 1:
            val, err = _seminorm_1d(K, eps1, float(h[0]))
        else:
            val, err = _seminorm_2d(K, eps1, h)
        val /= hn
        err /= hn
        if not math.isfinite(val) or err > tol * max(1.0, val):
            raise ArithmeticError(f"seminorm quadrature did not converge (h={h.tolist()}, err={err:.2e})")
        best = max(best, val)
    return best


def _seminorm_1d(K, eps1, h):
    def f(y):
        return abs(float(K(np.array([[y]]))[0]) - float(K(np.array([[y - h]]))[0]))

    a = 2 * eps1
    pts = sorted({p for b in K.breakpoints for p in (b, b + h, -b, -b + h)})
    total, err = 0.0, 0.0
    for lo, hi in ((a, None), (None, -a)):
        inner = [p for p in pts if (lo is None or p > lo) and (hi is None or p < hi)]
        # finite piece with breakpoints, then the infinite remainder
        if lo is not None:
            cut = max([lo + 4.0] + [p + 1.0 for p in inner])
            v1, e1 = integrate.quad(f, lo, cut, points=inner or None, limit=400)
            v2, e2 = integrate.quad(f, cut, np.inf, limit=400)
        else:
            cut = min([hi - 4.0] + [p - 1.0 for p in inner])
            v1, e1 = integrate.quad(f, cut, hi, points=inner or None, limit=400)
            v2, e2 = integrate.quad(f, -np.inf, cut, limit=400)
        total += v1 + v2
        err += e1 + e2
    return total, err


def _seminorm_2d(K, eps1, h):
    def f(r, th):
        y = np.array([[r * math.cos(th), r * math.sin(th)]])
        return abs(float(K(y)[0]) - float(K(y - h)[0])) * r

    val, err = integrate.dblquad(f, 0, 2 * math.pi, 2 * eps1, np.inf, epsabs=1e-10, epsrel=1e-8)
    return val, err


# --------------------------------------------------------------------------
# Weight tables


@dataclass(frozen=True)
class TailGrid:
    """Radial nodes and directions for the region |y| > R_out.

    Directions cover half the sphere; each tail weight already accounts for
    the antipodal direction.
    """

    radii: np.ndarray        # node radius per shell
    edges: np.ndarray        # shell edges, last one is +inf
    directions: np.ndarray   # (A, n) unit vectors
    arcs: np.ndarray         # (A, 2) angle ranges (2-D) or empty


def tail_grid(R_out: float, sigma: float, n: int, ratio_log10: float = 9.0, per_octave: int = 2,
              n_dirs: int = 16) -> TailGrid:
    check_sigma(sigma)
    octaves = math.ceil(ratio_log10 / sigma * math.log2(10))
    m = octaves * per_octave
    edges = R_out * 2.0 ** (np.arange(m + 1) / per_octave)
    radii = np.sqrt(edges[:-1] * edges[1:])
    radii = np.append(radii, edges[-1] * 2.0)
    edges = np.append(edges, np.inf)
    if n == 1:
        return TailGrid(radii, edges, np.array([[1.0]]), np.zeros((0, 2)))
    th = (np.arange(n_dirs) + 0.5) * math.pi / n_dirs
    arcs = np.stack([np.arange(n_dirs) * math.pi / n_dirs, (np.arange(n_dirs) + 1) * math.pi / n_dirs], axis=1)
    return TailGrid(radii, edges, np.stack([np.cos(th), np.sin(th)], axis=1), arcs)


@dataclass(frozen=True)
class WeightTable:
    """Quadrature weights for one kernel on one lattice.

    ``offsets`` are integer lattice offsets (full symmetric set), ``weights``
    the matching nonnegative weights.  The origin cell contributes
    ``near_origin_coeff * sum_i mu(h e_i) / h^2``.  ``tail_weights[i, a]``
    multiplies mu at ``tail.radii[i] * tail.directions[a]``.
    """

    n: int
    h_x: float
    R_out: float
    offsets: np.ndarray
    weights: np.ndarray
    near_origin_coeff: float
    tail: TailGrid
    tail_weights: np.ndarray
    sigma: float
    lam: float
    Lam: float
    kernel_name: str
    key: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def tail_coeff(self) -> float:
        return float(self.tail_weights.sum())

    def weight_map(self) -> dict:
        return {tuple(int(v) for v in o): float(w) for o, w in zip(self.offsets, self.weights)}

    def second_moment(self, include_origin: bool = True) -> float:
        """sum_j w_j |y_j|^2 (+ n * near_origin_coeff)."""
        y2 = np.sum((self.offsets * self.h_x) ** 2, axis=1)
        s = float(np.dot(self.weights, y2))
        return s + (self.n * self.near_origin_coeff if include_origin else 0.0)

    def half_stencil(self):
        """Offsets with the first nonzero coordinate positive and paired weights.

        The origin-cell coefficient is folded into the axis offsets; the result
        multiplies mu(u, x, y_j) once per pair.
        """
        o = self.offsets
        first = np.where(o[:, 0] != 0, o[:, 0], o[:, -1])
        keep = first > 0
        half = o[keep]
        w = 2.0 * self.weights[keep]
        extra = self.near_origin_coeff / self.h_x ** 2
        for i in range(self.n):
            e = np.zeros(self.n, dtype=int)
            e[i] = 1
            hit = np.nonzero(np.all(half == e, axis=1))[0]
            w[hit[0]] += extra
        return half, w

    def total_mass(self) -> float:
        """Sum of coefficients multiplying -2u(x): the CFL denominator."""
        _, w = self.half_stencil()
        return float(2.0 * w.sum() + 2.0 * self.tail_coeff)


_GL3 = np.polynomial.legendre.leggauss(3)


def _gl_nodes(a, b, sub: int):
    """Composite 3-point Gauss-Legendre nodes/weights on [a, b] (vectorized over rows)."""
    x, w = _GL3
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    edges = a + (b - a) * (np.arange(sub + 1) / sub)
    lo, hi = edges[..., :-1], edges[..., 1:]
    mid, half = (lo + hi) / 2, (hi - lo) / 2
    nodes = mid[..., None] + half[..., None] * x
    wts = half[..., None] * w
    return nodes.reshape(nodes.shape[:-2] + (-1,)), wts.reshape(wts.shape[:-2] + (-1,))


def _cache_key(K: KernelSpec, h_x: float, R_out: float, n: int) -> str:
    payload = json.dumps([repr(float(K.sigma)), repr(float(K.lam)), repr(float(K.Lam)), repr(float(h_x)),
                          repr(float(R_out)), n, K.name, 3], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def build_weight_table(K: KernelSpec, lattice: LatticeSpec, R_out: float, *, max_offsets: int = 4_000_000,
                       cache_dir: str | None = None, rebuild: bool = False, near_cells: float = 4.0,
                       jacobi_points: int = 24) -> WeightTable:
    """Weights for offsets whose cell meets the ball of radius ``R_out``.

    Cell weights integrate ``k(y) |y|^2 / |y_j|^2`` over the cell clipped to
    the ball, so that the sum reproduces the second moment of k cell by cell.
    """
    n, h = lattice.n, lattice.h_x
    if K.n != n:
        raise ValueError("kernel and lattice dimensions differ")
    check_sigma(K.sigma)
    if R_out < 2 * h - 1e-12:
        raise ValueError("R_out must be at least two lattice steps")
    J = int(math.floor(R_out / h + 0.5 * math.sqrt(n))) + 1
    if (2 * J + 1) ** n > max_offsets:
        raise MemoryError(f"weight table would need {(2 * J + 1) ** n} offsets, cap is {max_offsets}")
    key = _cache_key(K, h, R_out, n)
    if cache_dir and not rebuild:
        t = _load_cached(cache_dir, key, K, h, R_out, n)
        if t is not None:
            return t

    if n == 1:
        offsets, weights = _cells_1d(K, h, R_out, J, near_cells)
    else:
        offsets, weights = _cells_2d(K, h, R_out, J, near_cells)
    c0 = _origin_moment(K, h, jacobi_points) / n
    tg = tail_grid(R_out, K.sigma, n)
    tw = _tail_weights(K, tg)
    table = WeightTable(n, h, float(R_out), offsets, weights, float(c0), tg, tw, float(K.sigma),
                        float(K.lam), float(K.Lam), K.name, key)
    if cache_dir:
        _store_cached(cache_dir, table)
    return table


def _cells_1d(K, h, R, J, near_cells):
    j = np.arange(1, J + 1)
    lo = (j - 0.5) * h
    hi = np.minimum((j + 0.5) * h, R)
    keep = hi > lo
    j, lo, hi = j[keep], lo[keep], hi[keep]
    yj = j * h
    w = np.empty(len(j))
    clipped = hi < (j + 0.5) * h - 1e-15 * h
    near = (yj <= near_cells * h) | clipped
    if near.any():
        nodes, wts = _gl_nodes(lo[near], hi[near], 4)
        g = K(nodes[..., None]) * nodes ** 2
        w[near] = np.sum(g * wts, axis=-1) / yj[near] ** 2
    far = ~near
    w[far] = K(yj[far][:, None]) * h
    offsets = np.concatenate([-j[::-1], j])[:, None]
    weights = np.concatenate([w[::-1], w])
    return offsets, weights


def _cells_2d(K, h, R, J, near_cells):
    g1 = np.arange(-J, J + 1)
    I, Jg = np.meshgrid(g1, g1, indexing="ij")
    off = np.stack([I.ravel(), Jg.ravel()], axis=1)
    off = off[np.any(off != 0, axis=1)]
    y = off * h
    # nearest and farthest point of each cell from the origin
    near_pt = np.maximum(np.abs(y) - h / 2, 0.0)
    far_pt = np.abs(y) + h / 2
    dmin = np.linalg.norm(near_pt, axis=1)
    dmax = np.linalg.norm(far_pt, axis=1)
    keep = dmin < R
    off, y, dmax = off[keep], y[keep], dmax[keep]
    r = np.linalg.norm(y, axis=1)
    straddle = dmax > R
    near = (r <= near_cells * h) & ~straddle
    far = ~near & ~straddle
    w = np.empty(len(off))
    if near.any():
        yc = y[near]
        nx_, wx = _gl_nodes(yc[:, 0] - h / 2, yc[:, 0] + h / 2, 4)
        ny_, wy = _gl_nodes(yc[:, 1] - h / 2, yc[:, 1] + h / 2, 4)
        P = np.stack(np.broadcast_arrays(nx_[:, :, None], ny_[:, None, :]), axis=-1)
        W = wx[:, :, None] * wy[:, None, :]
        g = K(P) * np.sum(P ** 2, axis=-1)
        w[near] = np.sum(g * W, axis=(1, 2)) / r[near] ** 2
    if straddle.any():
        s = 16
        u = (np.arange(s) + 0.5) / s - 0.5
        yc = y[straddle]
        P = np.stack(np.broadcast_arrays(yc[:, 0, None, None] + h * u[None, :, None],
                                         yc[:, 1, None, None] + h * u[None, None, :]), axis=-1)
        inside = np.sum(P ** 2, axis=-1) <= R * R
        g = np.where(inside, K(P) * np.sum(P ** 2, axis=-1), 0.0)
        w[straddle] = np.sum(g, axis=(1, 2)) * (h / s) ** 2 / r[straddle] ** 2
    if far.any():
        w[far] = K(y[far]) * h * h
    return off, w


def _origin_moment(K, h, npts):
    """int over the origin cell of |y|^2 k(y) dy, Gauss-Jacobi in the radius."""
    n, s = K.n, K.sigma
    beta = 1.0 - s
    xs, ws = special.roots_jacobi(npts, 0.0, beta)

    def radial(rho, dirs):
        # int_0^rho r^{1-s} F(r) dr with F(r) = r^{n+s} k(r theta)
        a = rho[:, None]
        r = a * (1 + xs[None, :]) / 2
        F = r ** (n + s) * K(r[..., None] * dirs[:, None, :])
        return np.sum(ws[None, :] * F, axis=1) * (rho / 2) ** (2 - s)

    if n == 1:
        rho = np.array([h / 2, h / 2])
        dirs = np.array([[1.0], [-1.0]])
        return float(np.sum(radial(rho, dirs)))
    tx, tw = np.polynomial.legendre.leggauss(16)
    total = 0.0
    for k in range(8):
        a, b = k * math.pi / 4, (k + 1) * math.pi / 4
        th = (a + b) / 2 + (b - a) / 2 * tx
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        rho = (h / 2) / np.maximum(np.abs(dirs[:, 0]), np.abs(dirs[:, 1]))
        total += float(np.sum(tw * (b - a) / 2 * radial(rho, dirs)))
    return total


def _tail_weights(K, tg: TailGrid):
    """Shell integrals of k; 4-point Gauss-Legendre in log r, last shell mapped to (0, 1]."""
    n = K.n
    x, w = np.polynomial.legendre.leggauss(4)
    ms = len(tg.radii)
    out = np.zeros((ms, len(tg.directions)))
    for i in range(ms):
        a = tg.edges[i]
        if math.isfinite(tg.edges[i + 1]):
            la, lb = math.log(a), math.log(tg.edges[i + 1])
            lr = (la + lb) / 2 + (lb - la) / 2 * x
            r = np.exp(lr)
            wr = (lb - la) / 2 * w * r ** n       # dr = r dlog r, times r^{n-1}
        else:
            # r = a / s^(1/sigma), s in (0, 1]; integrand ~ regular in s for power-like kernels
            s = (1 + x) / 2
            r = a * s ** (-1.0 / K.sigma)
            wr = w / 2 * (a / K.sigma) * s ** (-1.0 / K.sigma - 1) * r ** (n - 1)
        if n == 1:
            out[i, 0] = 2.0 * np.sum(wr * K(r[:, None]))
        else:
            tx, tw = np.polynomial.legendre.leggauss(2)
            for d, (t0, t1) in enumerate(tg.arcs):
                th = (t0 + t1) / 2 + (t1 - t0) / 2 * tx
                P = r[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)[None]
                vals = K(P)
                out[i, d] = 2.0 * np.sum(wr[:, None] * (t1 - t0) / 2 * tw[None, :] * vals)
    return out


def tail_mass_reference(K: KernelSpec, R_out: float) -> float:
    """Adaptive quadrature of k over |y| > R_out (independent check of the tail weights)."""
    if K.n == 1:
        v, _ = integrate.quad(lambda s: float(K(np.array([[R_out / s]]))[0]) * R_out / s ** 2, 0.0, 1.0, limit=400)
        return 2.0 * v

    def f(r, th):
        return float(K(np.array([[r * math.cos(th), r * math.sin(th)]]))[0]) * r

    v, _ = integrate.dblquad(f, 0, 2 * math.pi, R_out, np.inf, epsrel=1e-10)
    return v


# --------------------------------------------------------------------------
# disk cache: <key>.npz with arrays offsets, weights, tail_radii, tail_edges,
# tail_dirs, tail_arcs, tail_weights and a JSON string "header"


def _store_cached(cache_dir: str, t: WeightTable) -> None:
    os.makedirs(cache_dir, exist_ok=True)
    header = json.dumps({"n": t.n, "h_x": t.h_x, "R_out": t.R_out, "c0": t.near_origin_coeff,
                         "sigma": t.sigma, "lam": t.lam, "Lam": t.Lam, "kernel": t.kernel_name})
    path = os.path.join(cache_dir, t.key + ".npz")
    tmp = path + ".tmp.npz"
    np.savez(tmp, offsets=t.offsets, weights=t.weights, tail_radii=t.tail.radii, tail_edges=t.tail.edges,
             tail_dirs=t.tail.directions, tail_arcs=t.tail.arcs, tail_weights=t.tail_weights,
             header=np.array(header))
    os.replace(tmp, path)


def _load_cached(cache_dir, key, K, h, R_out, n):
    path = os.path.join(cache_dir, key + ".npz")
    if not os.path.exists(path):
        return None
    with np.load(path) as z:
        hd = json.loads(str(z["header"]))
        tg = TailGrid(z["tail_radii"], z["tail_edges"], z["tail_dirs"], z["tail_arcs"])
        return WeightTable(n, h, float(R_out), z["offsets"], z["weights"], hd["c0"], tg, z["tail_weights"],
                           float(K.sigma), float(K.lam), float(K.Lam), K.name, key, {"cached": True})
