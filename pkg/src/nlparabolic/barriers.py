"""Explicit barrier functions built from a capped heat-type profile, and a
grid verifier for their subsolution, positivity and boundary properties.

    h(x, t)   = min(cap, (4 pi t)^(-n/sigma) exp(-alpha |x|^sigma / t))
    f         = exp(-beta t) h^gamma
    psi       = min(max(f - zeta, 0), A t)
    Psi       = c psi            (cap = delta^-n in the "delta" variant)

The verifier checks, on Q = B_1 x (0, 1]:

* M-psi - psi_t >= -tol on Q minus the small cube K-_{r/2} (seam nodes excluded),
* c psi > 2 on K+ built from r,
* psi <= 0 on the parabolic complement (|x| >= 1, or t = 0).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .geometry import ParabolicCube, Point, check_sigma
from .gridfn import LatticeSpec
from .kernels import build_weight_table, extremal_kernel
from .operators import DiscreteOperator

__all__ = ["BarrierParams", "BarrierReport", "heat_majorant", "barrier_f", "barrier_psi", "special_function_Psi",
           "normalize", "verify_subsolution", "parameter_search", "SearchFailure", "sigma_threshold", "r0"]


def r0(n: int) -> float:
    return 1.0 / (9.0 * math.sqrt(n))


@dataclass(frozen=True)
class BarrierParams:
    sigma: float
    n: int = 1
    alpha: float = 0.1
    beta: float = 1.0
    gamma: float = 4.0
    zeta: float = 0.0
    A: float = 1.0
    delta: float = 0.5
    c: float = 1.0
    r: float | None = None
    lam: float = 1.0
    Lam: float = 2.0
    variant: str = "delta"
    tau: float = 0.05

    def __post_init__(self):
        check_sigma(self.sigma)
        r = r0(self.n) if self.r is None else self.r
        object.__setattr__(self, "r", r)
        if not 0 < r < 1 / (2 * math.sqrt(self.n)):
            raise ValueError("need 0 < r < 1/(2 sqrt n)")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.variant not in ("base", "delta"):
            raise ValueError("variant must be 'base' or 'delta'")

    @property
    def cap(self) -> float:
        return 2.0 ** self.n if self.variant == "base" else self.delta ** (-self.n)

    def to_dict(self) -> dict:
        return asdict(self)


def heat_majorant(x, t, p: BarrierParams, cap: float | None = None):
    """min(cap, (4 pi t)^(-n/sigma) exp(-alpha |x|^sigma / t)); x has trailing axis n."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat majorant needs t > 0")
    cap = p.cap if cap is None else cap
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    val = (4 * math.pi * t) ** (-p.n / p.sigma) * np.exp(-p.alpha * r ** p.sigma / t)
    return np.minimum(cap, val)


def barrier_f(x, t, p: BarrierParams, cap: float | None = None):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    pos = t > 0
    tt = np.where(pos, t, 1.0)
    val = np.exp(-p.beta * tt) * heat_majorant(x, tt, p, cap) ** p.gamma
    return np.where(np.broadcast_to(pos, val.shape), val, 0.0)


def barrier_psi(x, t, p: BarrierParams, variant: str | None = None):
    """min(max(f - zeta, 0), A t), zero for t <= 0."""
    v = p if variant is None or variant == p.variant else replace(p, variant=variant)
    t = np.asarray(t, dtype=float)
    f = barrier_f(x, t, v)
    out = np.minimum(np.maximum(f - v.zeta, 0.0), v.A * np.maximum(t, 0.0))
    return np.where(t > 0, out, 0.0)


def special_function_Psi(x, t, p: BarrierParams):
    return p.c * barrier_psi(x, t, p)


def _branch(x, t, p: BarrierParams):
    """0: clamped at zero, 1: f - zeta, 2: ramp A t."""
    f = barrier_f(x, t, p)
    g = f - p.zeta
    ramp = p.A * t
    return np.where(g <= 0, 0, np.where(g < ramp, 1, 2))


# --------------------------------------------------------------------------
# regions


def kminus_half(p: BarrierParams) -> ParabolicCube:
    return ParabolicCube(Point.origin(p.n), p.r / 2, p.sigma, "K-")


def kplus(p: BarrierParams) -> ParabolicCube:
    return ParabolicCube(Point.origin(p.n), p.r, p.sigma, "K+")


def _kplus_samples(p: BarrierParams, m: int = 64):
    K = kplus(p)
    lo, hi, _, _ = K.time_interval()
    w = K.half_width * (1 - 1e-9)
    xs1 = np.linspace(-w, w, m)
    ts = lo + (hi - lo) * (np.arange(1, m + 1) / m)
    if p.n == 1:
        X = xs1[:, None]
    else:
        g = np.meshgrid(xs1, xs1, indexing="ij")
        X = np.stack([g[0].ravel(), g[1].ravel()], axis=1)
    return X, ts


def _boundary_samples(p: BarrierParams, m: int = 200):
    """Points of the parabolic complement: |x| >= 1 for t in (0, 1], and t = 0."""
    ts = np.concatenate([np.geomspace(1e-6, 1.0, m)])
    rad = np.concatenate([np.linspace(1.0, 1.5, 26), [2.0, 3.0, 10.0]])
    if p.n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = np.linspace(0, 2 * math.pi, 16, endpoint=False)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    X = (rad[:, None, None] * dirs[None]).reshape(-1, p.n)
    return X, ts


def normalize(p: BarrierParams, margin: float = 0.05, kplus_target: float = 2.5) -> BarrierParams:
    """Fix zeta, A and c from the other parameters.

    zeta sits just above the sup of f over the parabolic complement, A just
    above the sup of (f - zeta)/t outside K-_{r/2}, and c makes Psi reach
    ``kplus_target`` at the minimum over K+.
    """
    Xb, tb = _boundary_samples(p)
    tfine = np.geomspace(1e-6, 1.0, 4000)
    e1 = np.zeros((1, p.n))
    e1[0, 0] = 1.0
    fb = max(float(np.max(barrier_f(e1, tfine, p))),
             max(float(np.max(barrier_f(Xb, t, p))) for t in tb[::10]))
    zeta = fb * (1 + p.tau) + 1e-300
    q = replace(p, zeta=zeta, A=1.0)
    # sup of (f - zeta)/t outside K-_{r/2}: scan |x| = r/2 for small t and x = 0 for t above the cube
    km = kminus_half(q)
    t_top = km.time_interval()[1]
    ts = np.geomspace(1e-6, 1.0, 3000)
    rr = np.linspace(km.half_width, 1.0, 200)
    pts = np.zeros((len(rr), p.n))
    pts[:, 0] = rr
    worst = 0.0
    for t in ts:
        f = barrier_f(pts, t, q) - zeta
        worst = max(worst, float(np.max(f)) / t)
    t_above = ts[ts > t_top]
    worst = max(worst, float(np.max((barrier_f(np.zeros((1, p.n)), t_above, q) - zeta) / t_above)))
    A = float(max(worst, 1e-12) * (1 + margin))
    q = replace(q, A=A)
    Xk, tk = _kplus_samples(q)
    mn = min(float(np.min(barrier_psi(Xk, t, q))) for t in tk)
    c = kplus_target / mn if mn > 0 else 1.0
    return replace(q, c=c)


# --------------------------------------------------------------------------
# verifier


@dataclass
class BarrierReport:
    min_subsolution_residual: float
    min_on_Kplus: float
    max_on_parabolic_complement: float
    passed: tuple
    tol_residual: float
    scale: float
    seam_nodes: int
    seam_min_residual: float
    bump_allowance: float
    worst_node: tuple
    Psi_max: float
    h_x: float
    params: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = list(self.passed)
        d["ok"] = self.ok
        return d


def _operator(p: BarrierParams, h_x: float, R_out: float) -> tuple:
    lat = LatticeSpec(p.n, h_x, 1.0, 2.0, 0.0, 1.0, p.sigma)
    pair = (build_weight_table(extremal_kernel(p.sigma, p.lam, p.n), lat, R_out),
            build_weight_table(extremal_kernel(p.sigma, p.Lam, p.n), lat, R_out))
    return lat, DiscreteOperator("M-", pair)


def residual_field(p: BarrierParams, h_x: float, times, R_out: float = 2.0, rel_dt: float = 1e-7):
    """(times, nodes, residual, branch, seam) on nodes of B_1 at the given times."""
    lat, op = _operator(p, h_x, R_out)
    xs = lat.space_nodes()
    flat = xs.reshape(-1, p.n)
    inQ = np.sum(flat ** 2, axis=1) < 1.0 - 1e-12
    nodes = np.nonzero(inQ)[0]

    def ext(x, t):
        return barrier_psi(x, t, p)

    res = np.empty((len(times), len(nodes)))
    br = np.empty((len(times), len(nodes)), dtype=int)
    for k, t in enumerate(times):
        V = barrier_psi(xs, t, p)
        mval = op.apply_slice(lat, V, ext, float(t), nodes)
        d = rel_dt * t
        x_n = flat[nodes]
        p0 = barrier_psi(x_n, t, p)
        back = (p0 - barrier_psi(x_n, t - d, p)) / d
        fwd = (barrier_psi(x_n, t + d, p) - p0) / d
        res[k] = mval - np.minimum(back, fwd)
        br[k] = _branch(x_n, np.full(len(nodes), t), p)
    # seam: branch differs from a spatial or temporal neighbour
    seam = np.zeros_like(br, dtype=bool)
    full = np.full((len(times),) + xs.shape[:-1], -1)
    full.reshape(len(times), -1)[:, nodes] = br
    sh = full.shape
    for ax in range(len(sh)):
        for s in (1, -1):
            rolled = np.roll(full, s, axis=ax)
            edge = [slice(None)] * len(sh)
            edge[ax] = 0 if s == 1 else -1
            rolled[tuple(edge)] = full[tuple(edge)]
            diff = (rolled != full) & (rolled >= 0)
            seam |= diff.reshape(len(times), -1)[:, nodes]
    return np.asarray(times), flat[nodes], res, br, seam


def verification_times(p: BarrierParams, h_t: float):
    uni = np.arange(1, int(round(1 / h_t)) + 1) * h_t
    km = kminus_half(p).time_interval()[1]
    kp_lo, kp_hi, _, _ = kplus(p).time_interval()
    extra = np.geomspace(km * 0.5, kp_hi, 48)
    return np.unique(np.concatenate([uni, extra]))


def verify_subsolution(p: BarrierParams, h_x: float = 1 / 128, h_t: float | None = None, tol_rel: float = 1e-6,
                       R_out: float = 2.0) -> BarrierReport:
    check_sigma(p.sigma)
    if h_x > p.r / 4:
        raise ValueError(f"lattice step {h_x} too coarse to resolve K-_(r/2) with r={p.r}")
    h_t = h_t or h_x
    times = verification_times(p, h_t)
    t, X, res, br, seam = residual_field(p, h_x, times, R_out)
    km = kminus_half(p)
    in_km = km.contains(X[None, :, :], t[:, None])
    test = ~in_km & ~seam
    scale = float(max(np.max(barrier_psi(X, tt, p)) for tt in t))
    scale = max(scale, 1e-300)
    tol = tol_rel * scale
    if test.any():
        masked = np.where(test, res, np.inf)
        k = np.unravel_index(np.argmin(masked), masked.shape)
        min_res = float(masked[k])
        worst = (X[k[1]].tolist(), float(t[k[0]]))
    else:
        min_res, worst = 0.0, ((), 0.0)
    seam_out = seam & ~in_km
    seam_min = float(np.min(res[seam_out])) if seam_out.any() else 0.0
    bump = float(max(0.0, -np.min(res[in_km]))) if in_km.any() else 0.0

    Xk, tk = _kplus_samples(p)
    kmin = min(float(np.min(special_function_Psi(Xk, tt, p))) for tt in tk)
    Xb, tb = _boundary_samples(p)
    bmax = max(float(np.max(barrier_psi(Xb, tt, p))) for tt in tb)
    bmax = max(bmax, float(np.max(barrier_psi(Xb, 0.0, p))), float(np.max(barrier_psi(X, 0.0, p))))
    passed = (min_res >= -tol, kmin > 2.0, bmax <= 0.0)
    Psi_max = p.c * scale
    return BarrierReport(min_res, kmin, bmax, passed, tol, scale, int(seam_out.sum()), seam_min, bump, worst,
                         Psi_max, h_x, p.to_dict())


class SearchFailure(RuntimeError):
    def __init__(self, message: str, best: dict):
        super().__init__(message)
        self.best = best


# alpha = alpha_scale * n / sigma.  Small rates keep the |x|^sigma cusp at the
# origin from dominating the time decay; the scan runs from the tuned value outwards.
# Lower orders need a large power gamma, which confines the cusp to a ball of
# radius ~ (t / (gamma alpha))^(1/sigma), together with a larger rate so that
# the late part of K+ stays above the boundary level.
DEFAULT_GRID = {
    "alpha_scale": [1 / 12, 1 / 10, 1 / 14, 1 / 8, 1 / 16, 3 / 20],
    "gamma": [8.0, 4.0, 16.0, 64.0],
    "beta": [1.0, 4.0],
    "delta": [1 / 16, 1 / 8],
    "tau": [0.05],
}


def _search_order(grid: dict):
    keys = ["delta", "alpha_scale", "gamma", "beta", "tau"]
    return keys, list(itertools.product(*[grid[k] for k in keys]))


def parameter_search(sigma: float, n: int = 1, h_x: float = 1 / 128, grid: dict | None = None,
                     lam: float = 1.0, Lam: float = 2.0, sigma0: float = 0.0, confirm_h_x: float | None = None,
                     prescreen: bool = True) -> tuple:
    """Deterministic grid search; returns ``(params, report)`` for the first passing set.

    alpha is seeded at n/sigma and scaled by ``alpha_scale``.  When
    ``confirm_h_x`` is given a candidate must also pass at that step.
    """
    check_sigma(sigma)
    if sigma <= sigma0:
        raise ValueError(f"sigma={sigma} is not above the configured threshold {sigma0}")
    grid = grid or DEFAULT_GRID
    keys, combos = _search_order(grid)
    best = None
    for combo in combos:
        kv = dict(zip(keys, combo))
        base = BarrierParams(sigma, n, alpha=kv["alpha_scale"] * n / sigma, beta=kv["beta"], gamma=kv["gamma"],
                             delta=kv["delta"], lam=lam, Lam=Lam, tau=kv["tau"])
        try:
            p = normalize(base)
        except (ValueError, FloatingPointError):
            continue
        if prescreen:
            # cheap coarse pass first
            try:
                coarse = verify_subsolution(p, h_x=max(h_x, p.r / 4 / 2), h_t=1 / 64)
            except ValueError:
                coarse = None
            if coarse is not None and not coarse.ok:
                score = coarse.min_subsolution_residual / coarse.scale
                if best is None or score > best["score"]:
                    best = {"score": score, "params": p.to_dict(), "report": coarse.to_dict()}
                continue
        rep = verify_subsolution(p, h_x=h_x)
        score = rep.min_subsolution_residual / rep.scale
        if best is None or score > best["score"]:
            best = {"score": score, "params": p.to_dict(), "report": rep.to_dict()}
        if rep.ok and confirm_h_x is not None:
            rep2 = verify_subsolution(p, h_x=confirm_h_x)
            if not rep2.ok:
                continue
        if rep.ok:
            return p, rep
    raise SearchFailure(f"no barrier parameters passed at sigma={sigma}, n={n}", best or {})


def sigma_threshold(lo: float, hi: float, n: int = 1, h_x: float = 1 / 64, grid: dict | None = None,
                    iters: int = 4) -> dict:
    """Bisection on sigma with the verifier as oracle; ``hi`` must pass."""
    trace = []

    def ok(s):
        try:
            parameter_search(s, n, h_x, grid)
            trace.append((s, True))
            return True
        except SearchFailure:
            trace.append((s, False))
            return False

    if not ok(hi):
        return {"sigma_star": None, "trace": trace}
    if ok(lo):
        return {"sigma_star": lo, "trace": trace}
    for _ in range(iters):
        mid = (lo + hi) / 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return {"sigma_star": hi, "trace": trace}
