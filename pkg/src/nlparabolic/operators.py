"""Second differences, linear nonlocal operators, Pucci extremal operators and
inf-sup combinations on grid functions.

All operators share one evaluation path: second differences ``mu`` at every
stencil and tail node are split into ``mu+`` and ``mu-`` before weighting, so

    M-(u) <= L u <= M+(u)      and      M+(-u) = -M-(u)

hold exactly in floating point for tables ordered entry by entry.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .gridfn import GridFunction, LatticeSpec
from .kernels import WeightTable

__all__ = ["second_difference", "mu_plus", "mu_minus", "OperatorField", "DiscreteOperator",
           "linear_apply", "pucci_apply", "infsup_apply", "write_field_csv"]


def second_difference(u: GridFunction, x, y, t: float) -> float:
    """u(x+y, t) + u(x-y, t) - 2 u(x, t) for a lattice point x and time node t."""
    lat = u.lattice
    m = int(round((t - lat.tau1) / lat.h_t))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    pts = np.stack([x + y, x - y, x])
    v = u.evaluate_slice(m, pts)
    return float(v[0] + v[1] - 2 * v[2])


def mu_plus(mu):
    return np.maximum(mu, 0.0)


def mu_minus(mu):
    return np.maximum(-mu, 0.0)


@dataclass
class OperatorField:
    lattice: LatticeSpec
    values: np.ndarray          # (len(time_index), nx[, nx])
    time_index: np.ndarray
    name: str
    kernel_key: str = ""
    margin_spec: str = "all lattice nodes; values beyond the box come from the exterior evaluator"

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            bad = np.argwhere(~np.isfinite(self.values))[0]
            raise ValueError(f"non-finite operator value at index {bad.tolist()}")

    def at(self, m: int) -> np.ndarray:
        k = int(np.nonzero(self.time_index == m)[0][0])
        return self.values[k]


def _check_compatible(tables) -> None:
    t0 = tables[0]
    for t in tables[1:]:
        if (t.n, t.h_x, t.R_out) != (t0.n, t0.h_x, t0.R_out) or t.offsets.shape != t0.offsets.shape \
                or not np.array_equal(t.offsets, t0.offsets) \
                or not np.array_equal(t.tail.radii, t0.tail.radii) \
                or t.tail_weights.shape != t0.tail_weights.shape:
            raise ValueError("weight tables do not share a stencil")


# tail interpolation plans shared by operators with the same tail geometry
_PLANS: dict = {}


class DiscreteOperator:
    """Operator of kind ``linear``, ``M+``, ``M-`` or ``infsup``.

    ``tables``: one table (linear), the pair (lam-table, Lam-table) for the
    Pucci operators, or a nested list ``family[alpha][beta]`` for inf-sup
    (value = min over beta of max over alpha).
    """

    def __init__(self, kind: str, tables, zero_tail: bool = False):
        if kind not in ("linear", "M+", "M-", "infsup"):
            raise ValueError(f"unknown operator kind {kind!r}")
        self.kind = kind
        if kind == "linear":
            flat = [tables] if isinstance(tables, WeightTable) else list(tables)
            if len(flat) != 1:
                raise ValueError("linear operator takes exactly one table")
            self.shape = None
        elif kind in ("M+", "M-"):
            flat = list(tables)
            if len(flat) != 2:
                raise ValueError("Pucci operators take a (lam, Lam) table pair")
            self.shape = None
        else:
            rows = [list(r) for r in tables]
            if not rows or not rows[0]:
                raise ValueError("empty operator family")
            if any(len(r) != len(rows[0]) for r in rows):
                raise ValueError("ragged operator family")
            self.shape = (len(rows), len(rows[0]))
            flat = [t for r in rows for t in r]
        _check_compatible(flat)
        self.tables = flat
        t0 = flat[0]
        self.n, self.h, self.R_out = t0.n, t0.h_x, t0.R_out
        self.zero_tail = zero_tail
        self.half, _ = t0.half_stencil()
        self.W = np.stack([t.half_stencil()[1] for t in flat])           # (T, K)
        self.TW = np.stack([t.tail_weights.ravel() for t in flat])      # (T, S*A)
        if zero_tail:
            self.TW = np.zeros_like(self.TW)
        self.J = int(np.max(np.abs(self.half)))
        tg = t0.tail
        self.tail_vecs = (tg.radii[:, None, None] * tg.directions[None]).reshape(-1, self.n)
        self.key = "|".join(t.key for t in flat)

    # ------------------------------------------------------------------
    def cfl_mass(self) -> float:
        """Largest coefficient of -u(x) over the tables (for the CFL bound)."""
        return float(np.max(2.0 * self.W.sum(axis=1) + 2.0 * self.TW.sum(axis=1)))

    def _padded(self, lat: LatticeSpec, V: np.ndarray, exterior, t: float) -> np.ndarray:
        J, n = self.J, self.n
        if abs(lat.h_x - self.h) > 1e-15 * self.h:
            raise ValueError("lattice step differs from the weight-table step")
        size = lat.nx + 2 * J
        coords = (np.arange(size) - lat.half_count - J) * lat.h_x
        P = np.empty((size,) * n)
        g = np.stack(np.meshgrid(*([coords] * n), indexing="ij"), axis=-1)
        outside = np.ones((size,) * n, dtype=bool)
        outside[(slice(J, J + lat.nx),) * n] = False
        try:
            P[outside] = exterior(g[outside], t)
        except Exception as exc:  # pragma: no cover - message enrichment
            raise RuntimeError(f"exterior evaluation failed at time {t}: {exc}") from exc
        P[(slice(J, J + lat.nx),) * n] = V
        return P

    def second_differences(self, lat: LatticeSpec, V: np.ndarray, exterior, t: float, nodes=None):
        """mu at stencil offsets and tail nodes for the given nodes (flat indices)."""
        n, J = self.n, self.J
        P = self._padded(lat, V, exterior, t)
        if nodes is None:
            nodes = np.arange(V.size)
        ii = np.stack(np.unravel_index(nodes, V.shape), axis=1)  # (N, n)
        u0 = V.reshape(-1)[nodes]
        plus = ii[:, None, :] + J + self.half[None]
        minus = ii[:, None, :] + J - self.half[None]
        if n == 1:
            mu = P[plus[..., 0]] + P[minus[..., 0]] - 2.0 * u0[:, None]
        else:
            mu = P[plus[..., 0], plus[..., 1]] + P[minus[..., 0], minus[..., 1]] - 2.0 * u0[:, None]
        if self.zero_tail:
            return mu, np.zeros((len(nodes), self.TW.shape[1]))
        plan = self._tail_plan(lat, nodes, ii)
        tail = np.empty(plan["size"])
        tail[plan["inside"]] = plan["matrix"] @ V.reshape(-1)
        if plan["outside_pts"].shape[0]:
            # exterior data are pure in (x, t); reuse the last evaluation on this plan
            last = plan.get("exterior_cache")
            if last is None or last[0] is not exterior or last[1] != t:
                last = (exterior, t, np.asarray(exterior(plan["outside_pts"], t), dtype=float))
                plan["exterior_cache"] = last
            tail[plan["outside"]] = last[2]
        tail = tail.reshape(2, len(nodes), -1)
        return mu, tail[0] + tail[1] - 2.0 * u0[:, None]

    def _tail_plan(self, lat: LatticeSpec, nodes, ii) -> dict:
        """Sparse multilinear interpolation of V at the tail points x +- y, cached per lattice and node set."""
        key = (lat.n, lat.h_x, lat.X, self.tail_vecs.tobytes(), nodes.tobytes())
        plan = _PLANS.get(key)
        if plan is not None:
            return plan
        x = (ii - lat.half_count) * lat.h_x
        pts = np.stack([x[:, None, :] + self.tail_vecs[None], x[:, None, :] - self.tail_vecs[None]])
        pts = pts.reshape(-1, lat.n)
        inside = np.all(np.abs(pts) <= lat.X + 1e-12, axis=-1)
        p = pts[inside]
        s = (p + lat.X) / lat.h_x
        i0 = np.clip(np.floor(s).astype(int), 0, lat.nx - 2)
        fr = s - i0
        rows, cols, vals = [], [], []
        r = np.arange(p.shape[0])
        for corner in np.ndindex(*(2,) * lat.n):
            w = np.ones(p.shape[0])
            flat = np.zeros(p.shape[0], dtype=int)
            for a, c in enumerate(corner):
                w = w * (fr[:, a] if c else 1 - fr[:, a])
                flat = flat * lat.nx + i0[:, a] + c
            rows.append(r)
            cols.append(flat)
            vals.append(w)
        mat = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(p.shape[0], lat.nx ** lat.n))
        plan = {"size": pts.shape[0], "inside": np.nonzero(inside)[0], "outside": np.nonzero(~inside)[0],
                "outside_pts": pts[~inside], "matrix": mat}
        if len(_PLANS) >= 16:
            _PLANS.pop(next(iter(_PLANS)))
        _PLANS[key] = plan
        return plan

    @staticmethod
    def _split_sums(mu, mut, w, tw):
        pos = (np.maximum(mu, 0.0) * w).sum(axis=1) + (np.maximum(mut, 0.0) * tw).sum(axis=1)
        neg = (np.maximum(-mu, 0.0) * w).sum(axis=1) + (np.maximum(-mut, 0.0) * tw).sum(axis=1)
        return pos, neg

    def combine(self, mu, mut) -> np.ndarray:
        if self.kind == "linear":
            p, q = self._split_sums(mu, mut, self.W[0], self.TW[0])
            return p - q
        if self.kind in ("M+", "M-"):
            lo, hi = (0, 1)
            if self.kind == "M+":
                p, _ = self._split_sums(mu, mut, self.W[hi], self.TW[hi])
                _, q = self._split_sums(mu, mut, self.W[lo], self.TW[lo])
            else:
                p, _ = self._split_sums(mu, mut, self.W[lo], self.TW[lo])
                _, q = self._split_sums(mu, mut, self.W[hi], self.TW[hi])
            return p - q
        A, B = self.shape
        vals = np.empty((A, B, mu.shape[0]))
        for a in range(A):
            for b in range(B):
                k = a * B + b
                p, q = self._split_sums(mu, mut, self.W[k], self.TW[k])
                vals[a, b] = p - q
        return vals.max(axis=0).min(axis=0)

    def apply_slice(self, lat: LatticeSpec, V: np.ndarray, exterior, t: float, nodes=None) -> np.ndarray:
        mu, mut = self.second_differences(lat, V, exterior, t, nodes)
        out = self.combine(mu, mut)
        return out.reshape(V.shape) if nodes is None else out

    def apply(self, u: GridFunction, time_index=None) -> OperatorField:
        lat = u.lattice
        if time_index is None:
            time_index = np.arange(lat.nt)
        time_index = np.atleast_1d(np.asarray(time_index, dtype=int))
        vals = np.stack([self.apply_slice(lat, u.values[m], u.exterior, float(lat.times[m]))
                         for m in time_index])
        return OperatorField(lat, vals, time_index, self.kind, self.key)


def linear_apply(u: GridFunction, table: WeightTable, time_index=None, zero_tail: bool = False) -> OperatorField:
    return DiscreteOperator("linear", table, zero_tail).apply(u, time_index)


def pucci_apply(u: GridFunction, table_pair, sign: str = "plus", time_index=None,
                zero_tail: bool = False) -> OperatorField:
    """``table_pair = (table at lam, table at Lam)``; sign ``plus`` or ``minus``."""
    kind = {"plus": "M+", "minus": "M-", "+": "M+", "-": "M-"}[sign]
    return DiscreteOperator(kind, table_pair, zero_tail).apply(u, time_index)


def infsup_apply(u: GridFunction, family, time_index=None, zero_tail: bool = False) -> OperatorField:
    return DiscreteOperator("infsup", family, zero_tail).apply(u, time_index)


def write_field_csv(f: OperatorField, path) -> None:
    lat = f.lattice
    xs = lat.space_nodes().reshape(-1, lat.n)
    with open(path, "w", newline="") as fh:
        fh.write(f"# operator={f.name} kernel={f.kernel_key}\n")
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(lat.n)] + ["t", "value"])
        for k, m in enumerate(f.time_index):
            t = lat.times[m]
            for x, v in zip(xs, f.values[k].reshape(-1)):
                w.writerow([repr(float(c)) for c in x] + [repr(float(t)), repr(float(v))])
