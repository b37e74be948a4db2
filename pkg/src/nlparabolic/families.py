"""Deterministic test-data families used by the acceptance harness and the CLI.

Every generator takes an explicit ``numpy.random.Generator`` or seed so that
a family is reproduced exactly from its seed.  Callables follow the solver
convention: points with trailing axis n, plus a scalar time where relevant.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .geometry import DyadicCube, dyadic_root, dyadic_split
from .gridfn import GridFunction, LatticeSpec
from .kernels import KernelSpec, interpolated_kernel

__all__ = ["rng_for", "random_kernel", "random_grid_function", "ordered_pair", "constructed_subsolution",
           "abp_family", "bump_sum", "supersolution_family", "positive_family", "checkerboard",
           "lipschitz_sample", "random_dyadic_union"]


def rng_for(seed: int, *stream) -> np.random.Generator:
    """Independent generator for a named sub-stream of a master seed."""
    return np.random.default_rng([int(seed)] + [int(s) for s in stream])


def _ones(x):
    return np.ones(np.asarray(x).shape[:-1])


# --------------------------------------------------------------------------
# kernels and grid functions


def random_kernel(rng: np.random.Generator, sigma: float, lam: float, Lam: float, n: int = 1) -> KernelSpec:
    """Kernel inside the (lam, Lam) sandwich with a random even radial modulation."""
    freq = float(rng.uniform(0.5, 8.0))
    phase = float(rng.uniform(0, 2 * math.pi))
    depth = float(rng.uniform(0.0, 1.0))

    def shape(y):
        r = np.linalg.norm(y, axis=-1)
        return 0.5 + 0.5 * depth * np.cos(freq * r + phase)

    name = f"cos-interp(f={freq!r},p={phase!r},d={depth!r})"
    return interpolated_kernel(sigma, lam, Lam, n, shape=shape, name=name)


def random_grid_function(rng: np.random.Generator, lattice: LatticeSpec, smooth: bool = False) -> GridFunction:
    """Random values on every node with a matching random exterior.

    The exterior is a fixed random trigonometric field, frozen outside
    [-4, 4]^n so that far tail samples stay cheap; ``smooth`` also uses it
    for the lattice values.
    """
    n = lattice.n
    k = rng.normal(size=(4, n)) * 3
    a = rng.normal(size=4)
    b = rng.uniform(0, 2 * math.pi, size=4)

    def ext(x, t):
        x = np.clip(np.asarray(x, dtype=float), -4.0, 4.0)
        return np.sum(a * np.sin(x @ k.T + b), axis=-1) + 0.0 * t

    ext.bound = float(np.abs(a).sum())
    if smooth:
        xs = lattice.space_nodes()
        vals = np.stack([ext(xs, t) for t in lattice.times])
    else:
        vals = rng.uniform(-1, 1, size=lattice.shape)
    return GridFunction(lattice, vals, ext, max(1.0, ext.bound))


def ordered_pair(rng: np.random.Generator, n: int = 1):
    """Initial and exterior data (g1, phi1) <= (g2, phi2) pointwise.

    Returns two dicts with keys ``initial`` and ``exterior``.  Exterior
    fields are frozen outside [-4, 4]^n, as in ``random_grid_function``.
    """
    k = rng.normal(size=(3, n)) * 4
    a = rng.normal(size=3)
    gap_c = float(rng.uniform(0.01, 0.5))
    gap_a = float(rng.uniform(0, 1.0))
    gk = rng.normal(size=n) * 5
    ek = rng.normal(size=n) * 2
    ea = float(rng.normal())

    def g1(x):
        return np.sum(a * np.sin(x @ k.T), axis=-1)

    def g2(x):
        return g1(x) + gap_c + gap_a * np.sin(x @ gk) ** 2

    def e1(x, t):
        x = np.clip(np.asarray(x, dtype=float), -4.0, 4.0)
        return ea * np.cos(x @ ek) + 0.3 * t

    def e2(x, t):
        x = np.clip(np.asarray(x, dtype=float), -4.0, 4.0)
        return e1(x, t) + gap_c + gap_a * np.cos(x @ gk) ** 2

    return {"initial": g1, "exterior": e1}, {"initial": g2, "exterior": e2}


# --------------------------------------------------------------------------
# constructed subsolutions for the ABP pipeline

# (center, radius, time power); member 4 is a two-bump maximum
_ABP_MEMBERS = [(0.0, 0.4, 1.0), (0.1, 0.3, 2.0), (-0.12, 0.3, 0.5), (0.05, 0.35, 1.5), (0.0, 0.2, 1.0),
                (-0.05, 0.25, 3.0), (0.15, 0.25, 1.0), (-0.1, 0.35, 2.5)]


def constructed_subsolution(k: int, sigma: float, T: float = 1.0, inner: float = 0.5):
    """Space-time profile that is positive only inside B_inner x (T - inner^sigma, T].

    ``u = a(t) * max(rho^2 - |x - c|^2, -1/2)`` with a ramp ``a`` vanishing
    before the inner cube starts.  Member 4 (mod the table size) is the max of two caps.
    Forcing is obtained from the discrete equation, see ``abp_family``.
    """
    k = k % len(_ABP_MEMBERS)
    c, rho, p = _ABP_MEMBERS[k]
    ts = T - inner ** sigma

    def u(x, t):
        x = np.asarray(x, dtype=float)
        a = (np.maximum(t - ts, 0.0) / (T - ts)) ** p
        d2 = np.sum((x - c) ** 2, axis=-1)
        base = np.maximum(rho ** 2 - d2, -0.5)
        if k == 4:
            two = np.maximum(0.04 - np.sum((x - 0.2) ** 2, axis=-1), 0.03 - np.sum((x + 0.2) ** 2, axis=-1))
            base = np.maximum(two, -0.5)
        return a * base

    return u


def abp_family(count: int, sigma: float, T: float = 1.0, offset: int = 0) -> list:
    return [constructed_subsolution(offset + k, sigma, T) for k in range(count)]


# --------------------------------------------------------------------------
# solver data families


def bump_sum(centers, heights, widths, power=1.0, base: float = 0.0):
    """base + sum_i a_i (w_i / (|x - c_i| + w_i))^(2 power): nonnegative, Lipschitz, heavy-ish tails."""
    c = np.asarray(centers, dtype=float)
    a = np.asarray(heights, dtype=float)
    w = np.asarray(widths, dtype=float)

    def g(x):
        x = np.asarray(x, dtype=float)
        r = np.abs(x[..., 0][..., None] - c)
        return base + np.sum(a * (w / (r + w)) ** (2 * power), axis=-1)

    return g


def supersolution_family(seed: int, count: int, offset: int = 0) -> list:
    """Nonnegative initial bumps plus nonnegative localized sources (n = 1).

    Under u_t = M^- u + f with f >= 0 and zero exterior data each member is a
    nonnegative supersolution of u_t - M^- u >= 0.
    """
    out = []
    for i in range(offset, offset + count):
        rng = rng_for(seed, 8, i)
        c, a, w = rng.uniform(-0.5, 0.5, 3), rng.uniform(0.5, 3, 3), rng.uniform(0.02, 0.1, 3)
        p = float(rng.uniform(0.5, 1.5))
        gs, gc = float(rng.uniform(0, 2)), float(rng.uniform(-0.5, 0.5))

        def forcing(x, t, gs=gs, gc=gc):
            return gs * np.exp(-((np.asarray(x)[..., 0] - gc) / 0.2) ** 2)

        out.append({"initial": bump_sum(c, a, w, p), "forcing": forcing,
                    "params": {"centers": c.tolist(), "heights": a.tolist(), "widths": w.tolist(), "power": p,
                               "source_height": gs, "source_center": gc}})
    return out


def positive_family(seed: int, count: int, offset: int = 0) -> list:
    """Positive data 1 + Gaussian bumps with exterior value 1 (n = 1)."""
    out = []
    for i in range(offset, offset + count):
        rng = rng_for(seed, 10, i)
        c, a, w = rng.uniform(-0.8, 0.8, 2), rng.uniform(0, 5, 2), rng.uniform(0.05, 0.3, 2)

        def init(x, c=c, a=a, w=w):
            x = np.asarray(x, dtype=float)
            return 1.0 + np.sum(a * np.exp(-((x[..., 0][..., None] - c) / w) ** 2), axis=-1)

        def ext(x, t):
            return _ones(x)

        out.append({"initial": init, "exterior": ext,
                    "params": {"centers": c.tolist(), "heights": a.tolist(), "widths": w.tolist()}})
    return out


def checkerboard(width: float):
    """+-1 pattern alternating on cells of the given width (first coordinate)."""

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.where(np.floor(x[..., 0] / width) % 2 == 0, 1.0, -1.0)

    def ext(x, t):
        return g(x)

    return g, ext


def lipschitz_sample(rng: np.random.Generator, n: int = 1):
    """f(x, t) = sum_i a_i |x - c_i| + b t with the analytic Lipschitz bound sum|a_i| + |b|.

    The bound holds for the Euclidean space-time metric used by the
    sup-convolution error estimate.
    """
    m = 3
    c = rng.uniform(-1, 1, size=(m, n))
    a = rng.normal(size=m)
    b = float(rng.normal())

    def f(x, t):
        x = np.asarray(x, dtype=float)
        d = np.linalg.norm(x[..., None, :] - c, axis=-1)
        return np.sum(a * d, axis=-1) + b * t

    return f, float(np.abs(a).sum() + abs(b))


# --------------------------------------------------------------------------
# dyadic families


def random_dyadic_union(rng: np.random.Generator, n: int = 1, max_depth: int = 3, count: int | None = None,
                        rule=(1, 1), sigma=Fraction(1)) -> list:
    """Random dyadic cubes of depth <= max_depth below the unit root."""
    root = dyadic_root(n, rule, sigma)
    count = int(rng.integers(1, 9)) if count is None else count
    out = []
    for _ in range(count):
        k: DyadicCube = root
        depth = int(rng.integers(0, max_depth + 1))
        for _ in range(depth):
            kids = dyadic_split(k, rule, n)
            k = kids[int(rng.integers(len(kids)))]
        out.append(k)
    return out
