"""Regularity estimators on computed trajectories: level-set decay, weak
Harnack, Harnack quotient, oscillation decay (Hölder), difference-quotient
exponents and tangent-paraboloid classification.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .envelope import upper_hull_1d
from .geometry import ParabolicCube, Point
from .gridfn import GridFunction, level_set_measure
from .kernels import KernelSpec

__all__ = ["DecayFit", "ParaboloidMasks", "RegularityReport", "HolderFit", "loglog_fit", "decay_fit",
           "calibrate_decay", "decay_bound_holds", "weak_harnack_check", "harnack_quotient",
           "sublevel_fraction", "holder_fit", "c1alpha_fit", "paraboloid_classify", "bad_set_measures"]


def loglog_fit(xs, ys) -> tuple:
    """OLS of log y on log x; returns (slope, intercept, r_squared)."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


# --------------------------------------------------------------------------
# level-set decay


@dataclass
class DecayFit:
    """measure(s) ~ C_fit * s^(-eps_star_fit) over thresholds with nonzero measure."""

    s_grid: list
    measures: list
    C_fit: float | None
    eps_star_fit: float | None
    r_squared: float | None
    degenerate: bool = False
    used: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def decay_fit(u: GridFunction, region: ParabolicCube, s_grid, min_points: int = 3) -> DecayFit:
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any(s_grid <= 0) or np.any(np.diff(s_grid) <= 0):
        raise ValueError("s_grid must be positive and increasing")
    mask = u.node_mask(region)
    if np.any(u.values[mask] < -1e-12):
        raise ValueError("decay_fit needs u >= 0 on the region")
    meas = [level_set_measure(u, float(s), region, "above") for s in s_grid]
    pos = np.array(meas) > 0
    if pos.sum() < min_points:
        return DecayFit(s_grid.tolist(), meas, None, None, None, True, int(pos.sum()))
    slope, icpt, r2 = loglog_fit(s_grid[pos], np.array(meas)[pos])
    return DecayFit(s_grid.tolist(), meas, math.exp(icpt), -slope, r2, False, int(pos.sum()))


def calibrate_decay(fits, region_measure: float, safety: float = 2.0, eps_fraction: float = 0.5) -> tuple:
    """Frozen (C, eps*) from training fits.

    eps* is ``eps_fraction`` times the smallest fitted exponent (the bound only
    needs some positive exponent, and a smaller one is weaker for s >= 1); C is
    ``safety`` times the tightest constant making every training curve satisfy
    measure <= C s^(-eps*) |region|.
    """
    good = [f for f in fits if not f.degenerate]
    if not good:
        raise ValueError("no usable fits to calibrate on")
    if not 0 < eps_fraction <= 1:
        raise ValueError("eps_fraction must lie in (0, 1]")
    eps = eps_fraction * min(f.eps_star_fit for f in good)
    C = 0.0
    for f in good:
        s = np.asarray(f.s_grid)
        m = np.asarray(f.measures)
        C = max(C, float(np.max(m * s ** eps)) / region_measure)
    return safety * C, eps


def decay_bound_holds(fit: DecayFit, C: float, eps: float, region_measure: float) -> tuple:
    """(holds, worst ratio measure / bound) over the fit's thresholds."""
    s = np.asarray(fit.s_grid)
    m = np.asarray(fit.measures)
    bound = C * s ** (-eps) * region_measure
    ratio = float(np.max(m / bound))
    return ratio <= 1.0, ratio


def weak_harnack_check(u: GridFunction, center: Point, r: float, c0: float, C: float, eps: float,
                       s_grid, sigma: float | None = None) -> tuple:
    """|{u > s} cap rQ_r(center)| <= C r^(n+sigma) (u(center) + c0 r^sigma)^eps s^(-eps) on the grid.

    Returns ``(passed, margin)`` where margin is the smallest bound minus
    measure, normalised by the bound.
    """
    sigma = u.lattice.sigma if sigma is None else sigma
    n = u.lattice.n
    cube = ParabolicCube(center, r, sigma, "rQ")
    u0 = u.at_node(center.x, center.t)
    if u0 < 0:
        raise ValueError("weak Harnack check needs u >= 0")
    margin = math.inf
    for s in np.asarray(s_grid, dtype=float):
        m = level_set_measure(u, float(s), cube, "above")
        bound = C * r ** (n + sigma) * (u0 + c0 * r ** sigma) ** eps * s ** (-eps)
        if bound > 0:
            margin = min(margin, (bound - m) / bound)
        elif m > 0:
            margin = -math.inf
    return margin >= 0, margin


def harnack_quotient(u: GridFunction, c0: float = 0.0, r: float = 0.5, anchor: Point | None = None) -> float:
    """sup over rQ-_r / (inf over rQ+_r + c0); rQ- lies earlier than rQ+."""
    lat = u.lattice
    anchor = anchor or Point.origin(lat.n)
    lo = ParabolicCube(anchor, r, lat.sigma, "rQ-")
    hi = ParabolicCube(anchor, r, lat.sigma, "rQ+")
    ml, mh = u.node_mask(lo), u.node_mask(hi)
    if not ml.any() or not mh.any():
        raise ValueError("Harnack cubes are not covered by the trajectory")
    if lat.tau2 < hi.time_interval()[1] - 1e-12:
        raise ValueError("trajectory ends before the later Harnack cube")
    inf_hi = float(np.min(u.values[mh]))
    if inf_hi + c0 <= 0:
        raise ValueError("harnack_quotient needs a positive trajectory")
    return float(np.max(u.values[ml])) / (inf_hi + c0)


def sublevel_fraction(u: GridFunction, M: float, r0: float | None = None) -> dict:
    """inf of u over K+ (built from r0) and the fraction of K-_{r0} nodes with u <= M."""
    lat = u.lattice
    r0 = 1.0 / (9.0 * math.sqrt(lat.n)) if r0 is None else r0
    o = Point.origin(lat.n)
    kp = ParabolicCube(o, r0, lat.sigma, "K+")
    km = ParabolicCube(o, r0, lat.sigma, "K-")
    mp, mm = u.node_mask(kp), u.node_mask(km)
    if not mp.any() or not mm.any():
        raise ValueError("lattice does not resolve the K+ and K- cubes")
    frac = float(np.count_nonzero(u.values[mm] <= M)) / float(np.count_nonzero(mm))
    return {"inf_Kplus": float(np.min(u.values[mp])), "fraction": frac, "nodes": int(np.count_nonzero(mm))}


# --------------------------------------------------------------------------
# oscillation decay


@dataclass
class HolderFit:
    alpha_fit: float
    oscillations: list
    radii: list
    ratios: list
    residuals: list
    exact: bool = False

    @property
    def kappa(self) -> float:
        """1 - largest per-scale oscillation ratio."""
        return 1.0 - max(self.ratios) if self.ratios else 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kappa"] = self.kappa
        return d


def holder_fit(u: GridFunction, point: Point, depth: int, alpha_cap: float = 2.0, min_scales: int = 3,
               r_top: float = 1.0) -> HolderFit:
    """Regress log2 osc(bQ_{r_top 2^-k}(point)) on k for k = 0..depth.

    Scales whose cube holds fewer than 2 lattice steps of radius are dropped.
    """
    lat = u.lattice
    radii, osc = [], []
    for k in range(depth + 1):
        r = r_top * 2.0 ** (-k)
        if r < 2 * lat.h_x or r ** lat.sigma < lat.h_t:
            break
        cube = ParabolicCube(point, r, lat.sigma, "bQ")
        mask = u.node_mask(cube)
        lo, hi, _, _ = cube.time_interval()
        if lo < lat.tau1 - 1e-12 or hi > lat.tau2 + 1e-12 or np.any(np.abs(point.x) + r > lat.X + 1e-12):
            raise ValueError(f"cube of radius {r} leaves the trajectory")
        v = u.values[mask]
        radii.append(r)
        osc.append(float(v.max() - v.min()))
    if len(radii) < min_scales:
        raise ValueError(f"only {len(radii)} usable scales")
    osc_a = np.array(osc)
    if np.all(osc_a <= 1e-14 * max(1.0, float(np.max(np.abs(u.values))))):
        return HolderFit(alpha_cap, osc, radii, [0.0] * (len(osc) - 1), [0.0] * len(osc), True)
    if np.any(osc_a <= 0):
        keep = osc_a > 0
    else:
        keep = np.ones(len(osc_a), dtype=bool)
    k = np.arange(len(osc_a))[keep]
    y = np.log2(osc_a[keep])
    A = np.column_stack([k, np.ones_like(k, dtype=float)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    alpha = float(np.clip(-coef[0], 0.0, alpha_cap))
    res = (y - A @ coef).tolist()
    ratios = [osc[i + 1] / osc[i] if osc[i] > 0 else 0.0 for i in range(len(osc) - 1)]
    return HolderFit(alpha, osc, radii, ratios, res, False)


def c1alpha_fit(u: GridFunction, h_list, point: Point, depth: int, kernel: KernelSpec | None = None,
                axis: int = 0, r_top: float = 0.5) -> dict:
    """Oscillation exponent of the difference quotients (u(x + h e) - u(x)) / |h|.

    Absent (with a reason) unless the kernel carries the L1 smoothness tag.
    """
    if kernel is not None and kernel.class_tag != "L1":
        return {"value": None, "reason": f"kernel {kernel.name!r} is tagged {kernel.class_tag}, not L1"}
    lat = u.lattice
    fits = []
    for h in h_list:
        j = int(round(h / lat.h_x))
        if j < 1 or abs(j * lat.h_x - h) > 1e-9:
            raise ValueError(f"shift {h} is not a lattice multiple")
        if np.any(np.abs(point.x) + r_top + h > lat.X):
            raise ValueError(f"shift {h} too large for the lattice margin")
        V = np.asarray(u.values)
        D = np.zeros_like(V)
        sl_a = [slice(None)] * V.ndim
        sl_b = [slice(None)] * V.ndim
        sl_a[1 + axis] = slice(j, None)
        sl_b[1 + axis] = slice(0, V.shape[1 + axis] - j)
        D[tuple(sl_b)] = (V[tuple(sl_a)] - V[tuple(sl_b)]) / h
        g = GridFunction(lat, D)
        fits.append(holder_fit(g, point, depth, r_top=r_top))
    vals = [f.alpha_fit for f in fits]
    stable = len(vals) >= 2 and abs(vals[-1] - vals[-2]) <= 0.1
    return {"value": vals[-1], "per_h": vals, "h_list": list(h_list), "stable": stable,
            "exact": all(f.exact for f in fits), "fits": [f.to_dict() for f in fits]}


# --------------------------------------------------------------------------
# tangent paraboloids


@dataclass
class ParaboloidMasks:
    h: float
    good_mask: np.ndarray
    bad_mask: np.ndarray
    region_mask: np.ndarray

    def bad_measure(self, cell_volume: float) -> float:
        return float(np.count_nonzero(self.bad_mask)) * cell_volume


def _lower_hull_values(pts: np.ndarray, vals: np.ndarray) -> np.ndarray:
    """Greatest convex minorant of (pts, vals) evaluated at pts."""
    if pts.shape[1] == 1:
        order = np.argsort(pts[:, 0], kind="stable")
        x, y = pts[order, 0], vals[order]
        idx = upper_hull_1d(x, -y)
        out = np.empty(len(vals))
        out[order] = np.interp(x, x[idx], y[idx])
        return out
    if np.ptp(vals) == 0:
        return vals.copy()
    lifted = np.column_stack([pts, vals])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        hull = ConvexHull(lifted, qhull_options="QJ")
    eq = hull.equations
    low = eq[eq[:, 2] < -1e-12]
    slopes = -low[:, :2] / low[:, 2:3]
    icpt = -low[:, 3] / low[:, 2]
    return np.max(pts @ slopes.T + icpt[None, :], axis=1)


def paraboloid_classify(u: GridFunction, h: float, region: ParabolicCube | None = None,
                        window: ParabolicCube | None = None, tol: float | None = None) -> ParaboloidMasks:
    """Nodes of ``region`` touched from below by c + b.(x - x0) - h(|x - x0|^2 / 2 + (t0 - t)).

    The comparison runs over lattice nodes of ``window`` (default: the whole
    lattice) with t <= t0.  With W = u + (h/2)|x|^2 - h t, a node is good iff
    W there equals min_{s <= t0} W(x0, s) and x0 lies on the greatest convex
    minorant of that running minimum.
    """
    lat = u.lattice
    n = lat.n
    region = region or ParabolicCube(Point.origin(n), 1.0, lat.sigma, "K-")
    xs = lat.space_nodes()
    r2 = np.sum(xs * xs, axis=-1)
    W = np.asarray(u.values) + 0.5 * h * r2[None] - h * lat.times.reshape((-1,) + (1,) * n)
    scale = float(np.max(np.abs(W))) or 1.0
    tol = 1e-10 * scale if tol is None else tol
    wmask = np.ones(lat.shape[1:], dtype=bool) if window is None else window.contains_space(xs)
    tvalid = np.ones(lat.nt, dtype=bool) if window is None else window.contains_time(lat.times) | (
        lat.times <= window.time_interval()[0])
    rmask = u.node_mask(region)
    good = np.zeros(lat.shape, dtype=bool)
    pts = xs[wmask]
    run = np.full(pts.shape[0], np.inf)
    for m in range(lat.nt):
        if tvalid[m]:
            run = np.minimum(run, W[m][wmask])
        if not rmask[m].any():
            continue
        env = _lower_hull_values(pts, run)
        on_env = run <= env + tol
        at_min = W[m][wmask] <= run + tol
        g = np.zeros(lat.shape[1:], dtype=bool)
        g[wmask] = on_env & at_min
        good[m] = g & rmask[m]
    return ParaboloidMasks(h, good, rmask & ~good, rmask)


def bad_set_measures(u: GridFunction, M: float, beta: float, kmax: int, region: ParabolicCube,
                     window: ParabolicCube | None = None) -> list:
    """Measures of the bad set of aperture M^(beta k) inside ``region`` for k = 0..kmax."""
    cv = u.lattice.cell_volume
    return [paraboloid_classify(u, M ** (beta * k), region, window).bad_measure(cv) for k in range(kmax + 1)]


@dataclass
class RegularityReport:
    alpha_fit: float
    c1alpha_fit: float | None
    harnack_quotient: float
    weak_harnack_pass: bool
    constants: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.alpha_fit <= 2.0:
            raise ValueError("alpha_fit must lie in [0, 2]")

    def to_dict(self) -> dict:
        return asdict(self)
