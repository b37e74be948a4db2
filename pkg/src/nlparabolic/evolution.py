"""Explicit monotone time stepping for u_t = Op(u) + f with nonlocal Dirichlet data.

Nodes outside the spatial domain take the exterior data every step; nodes
beyond the lattice box are supplied by the same evaluator through the
operator's padding and tail sampling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gridfn import GridFunction, LatticeSpec
from .kernels import KernelSpec, build_weight_table, extremal_kernel
from .operators import DiscreteOperator

__all__ = ["EvolutionProblem", "Trajectory", "cfl_timestep", "build_operator", "step", "solve"]


def _zero(x, t=0.0):
    return np.zeros(np.asarray(x).shape[:-1])


@dataclass
class EvolutionProblem:
    """u_t = Op(u) + f in domain x (0, T], u = exterior outside, u(., 0) = initial.

    ``operator`` is one of ``linear``, ``M+``, ``M-``, ``infsup``.  For
    ``linear`` pass ``kernel``; for ``infsup`` pass ``family`` (nested list of
    KernelSpec indexed [alpha][beta]).  Callables take points with trailing
    axis n (and a scalar time where relevant).
    """

    operator: str
    sigma: float
    n: int = 1
    lam: float = 1.0
    Lam: float = 1.0
    h_x: float = 1.0 / 64
    X: float = 2.0
    R_out: float = 2.0
    T: float = 1.0
    cfl_safety: float = 0.9
    domain: tuple = ("box", 1.0)
    initial: Callable = _zero
    exterior: Callable = _zero
    forcing: Callable | None = None
    kernel: KernelSpec | None = None
    family: list | None = None
    stride: int = 1
    exterior_bound: float | None = None
    zero_tail: bool = False
    table_cache: str | None = None

    def __post_init__(self):
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")
        if self.domain[0] not in ("box", "ball"):
            raise ValueError("domain must be ('box', half_width) or ('ball', radius)")
        if self.T <= 0:
            raise ValueError("horizon must be positive")

    def domain_mask(self, xs: np.ndarray) -> np.ndarray:
        kind, r = self.domain
        if kind == "box":
            return np.all(np.abs(xs) < r - 1e-12, axis=-1)
        return np.sum(xs * xs, axis=-1) < r * r - 1e-12


@dataclass
class Trajectory:
    u: GridFunction
    dt: float
    steps: int
    diagnostics: list = field(default_factory=list)

    @property
    def snapshots(self) -> np.ndarray:
        return self.u.values


def build_operator(prob: EvolutionProblem) -> DiscreteOperator:
    lat = LatticeSpec(prob.n, prob.h_x, 1.0, prob.X, 0.0, 1.0, prob.sigma)

    def table(K):
        return build_weight_table(K, lat, prob.R_out, cache_dir=prob.table_cache)

    if prob.operator == "linear":
        K = prob.kernel or extremal_kernel(prob.sigma, prob.lam, prob.n)
        return DiscreteOperator("linear", table(K), prob.zero_tail)
    if prob.operator in ("M+", "M-"):
        pair = (table(extremal_kernel(prob.sigma, prob.lam, prob.n)),
                table(extremal_kernel(prob.sigma, prob.Lam, prob.n)))
        return DiscreteOperator(prob.operator, pair, prob.zero_tail)
    if prob.operator == "infsup":
        if not prob.family:
            raise ValueError("inf-sup operator needs a kernel family")
        return DiscreteOperator("infsup", [[table(K) for K in row] for row in prob.family], prob.zero_tail)
    raise ValueError(f"unknown operator {prob.operator!r}")


def cfl_timestep(op_or_tables, cfl_safety: float) -> float:
    """cfl_safety / max over kernels of (sum_j 2 w_j + 2 near-origin mass + 2 tail mass)."""
    if not 0 < cfl_safety < 1:
        raise ValueError("cfl_safety must lie in (0, 1)")
    if isinstance(op_or_tables, DiscreteOperator):
        W = op_or_tables.cfl_mass()
    else:
        tabs = op_or_tables if isinstance(op_or_tables, (list, tuple)) else [op_or_tables]
        W = max(t.total_mass() for t in tabs)
    if not W > 0:
        raise ValueError("total weight mass is zero")
    return cfl_safety / W


def step(V: np.ndarray, t: float, dt: float, prob: EvolutionProblem, op: DiscreteOperator, lat: LatticeSpec,
         xs: np.ndarray, inside: np.ndarray, nodes: np.ndarray | None = None):
    """One explicit Euler step from time t; returns (new values, max |Op u|).

    The operator is evaluated only at domain nodes (``nodes``: their flat
    indices); everything else takes the exterior data.
    """
    ext = prob.exterior
    if nodes is None:
        nodes = np.flatnonzero(inside)
    opu = np.zeros(V.shape)
    opu.reshape(-1)[nodes] = op.apply_slice(lat, V, ext, t, nodes)
    rate = opu if prob.forcing is None else opu + prob.forcing(xs, t)
    new = np.where(inside, V + dt * rate, ext(xs, t + dt))
    bad = ~np.isfinite(new)
    if bad.any():
        idx = np.argwhere(bad)[0]
        raise FloatingPointError(f"non-finite value at node {xs[tuple(idx)].tolist()}, t={t + dt}")
    return new, float(np.max(np.abs(opu))) if opu.size else 0.0


def solve(prob: EvolutionProblem, op: DiscreteOperator | None = None, max_steps: int = 2_000_000) -> Trajectory:
    op = op or build_operator(prob)
    dt_max = cfl_timestep(op, prob.cfl_safety)
    s = max(1, int(prob.stride))
    nsnap = max(1, math.ceil(prob.T / (dt_max * s) - 1e-12))
    nsteps = nsnap * s
    if nsteps > max_steps:
        raise RuntimeError(f"{nsteps} steps exceed the cap {max_steps}")
    dt = prob.T / nsteps
    h_t = prob.T / nsnap
    lat = LatticeSpec(prob.n, prob.h_x, h_t, prob.X, 0.0, prob.T, prob.sigma)
    xs = lat.space_nodes()
    inside = prob.domain_mask(xs)
    V = np.where(inside, prob.initial(xs), prob.exterior(xs, 0.0)).astype(float)
    out = np.empty(lat.shape)
    out[0] = V
    W = op.cfl_mass()
    nodes = np.flatnonzero(inside)
    diags = []
    for k in range(nsteps):
        t = k * dt
        V, amax = step(V, t, dt, prob, op, lat, xs, inside, nodes)
        diags.append({"step": k + 1, "max_abs_op": amax, "cfl_margin": 1.0 - dt * W})
        if (k + 1) % s == 0:
            out[(k + 1) // s] = V
    ext = prob.exterior

    def exterior(x, t):
        return ext(np.asarray(x, dtype=float), float(t))

    exterior.bound = prob.exterior_bound
    u = GridFunction(lat, out, exterior, prob.exterior_bound)
    return Trajectory(u, dt, nsteps, diags)
