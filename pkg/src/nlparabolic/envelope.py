"""Parabolic concave envelopes, normal-map measures, the forward
sup-convolution and the ABP diagnostic suite.

The envelope of ``u`` over a space-time cube is computed slice by slice:

    w(x, t)     = max_{s <= t} u+(x, s)          (running max over the cube's times)
    Gamma(., t) = least concave majorant of w(., t) vanishing on the cube's lateral boundary

Any admissible majorant (concave in x, nondecreasing in t, nonpositive on the
boundary, above u+) dominates w and hence its concave hull; the hull of the
running max is itself admissible, so it is the envelope.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .geometry import ParabolicCube
from .gridfn import GridFunction, LatticeSpec

__all__ = ["EnvelopeResult", "AbpReport", "PreconditionError", "upper_hull_1d", "concave_hull_1d",
           "concave_hull_2d", "concave_envelope", "normal_map_measure", "normal_map_bruteforce_1d",
           "tso_ratio", "contact_sign_check", "ring_radii", "ring_diagnostic", "cube_cover",
           "abp_diagnostics", "sup_convolution", "lipschitz_estimate"]


class PreconditionError(ValueError):
    def __init__(self, message: str, nodes: list):
        super().__init__(message)
        self.nodes = nodes


# --------------------------------------------------------------------------
# hulls


def upper_hull_1d(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Indices of the upper hull vertices of points sorted by strictly increasing x (monotone chain)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b when it lies on or below the chord a -> i
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def concave_hull_1d(x, y, xq) -> np.ndarray:
    """Least concave majorant of the points (x, y), evaluated at xq inside [x[0], x[-1]]."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    idx = upper_hull_1d(x, y)
    return np.interp(xq, x[idx], y[idx])


def concave_hull_2d(points: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Least concave majorant of scattered data in the plane, evaluated at query points.

    The majorant is the minimum over the upward facets of the 3-D convex hull
    of the lifted points; queries must lie in the convex hull of ``points``.
    """
    values = np.asarray(values, dtype=float)
    if np.ptp(values) == 0:
        return np.full(len(query), float(values[0]))
    lifted = np.column_stack([points, values])
    try:
        hull = ConvexHull(lifted)
    except QhullError:
        hull = ConvexHull(lifted, qhull_options="QJ")
    eq = hull.equations
    up = eq[eq[:, 2] > 1e-12]
    # plane a x + b y + c z + d = 0  ->  z = -(a x + b y + d) / c
    slopes = -up[:, :2] / up[:, 2:3]
    icpt = -up[:, 3] / up[:, 2]
    out = np.empty(len(query))
    for s in range(0, len(query), 4096):
        q = query[s:s + 4096]
        out[s:s + 4096] = np.min(q @ slopes.T + icpt[None, :], axis=1)
    return out


def _boundary_points(domain: ParabolicCube, h: float) -> np.ndarray:
    n, c, R = domain.n, np.asarray(domain.anchor.x, dtype=float), domain.half_width
    if n == 1:
        return np.array([[c[0] - R], [c[0] + R]])
    if domain.shape == "ball":
        m = max(64, int(math.ceil(2 * math.pi * R / h)) * 2)
        th = np.arange(m) * (2 * math.pi / m)
        return c + R * np.column_stack([np.cos(th), np.sin(th)])
    m = max(8, int(math.ceil(2 * R / h)))
    s = np.linspace(-R, R, m + 1)
    edges = [np.column_stack([s, np.full_like(s, -R)]), np.column_stack([s, np.full_like(s, R)]),
             np.column_stack([np.full_like(s, -R), s]), np.column_stack([np.full_like(s, R), s])]
    return c + np.unique(np.concatenate(edges), axis=0)


# --------------------------------------------------------------------------
# envelope


@dataclass
class EnvelopeResult:
    """Envelope fields on the lattice of ``u``; everything outside the domain is zero."""

    gamma: GridFunction
    contact_mask: np.ndarray
    dt_gamma: np.ndarray
    hess_det_minus: np.ndarray
    slope: np.ndarray
    domain_mask: np.ndarray
    domain: ParabolicCube
    inner: ParabolicCube | None
    contact_tol: float

    @property
    def lattice(self) -> LatticeSpec:
        return self.gamma.lattice

    @property
    def density(self) -> np.ndarray:
        """Normal-map density dGamma/dt * det(D^2 Gamma)^- per node."""
        return self.dt_gamma * self.hess_det_minus


def _space_time_mask(lat: LatticeSpec, cube: ParabolicCube) -> np.ndarray:
    sm = cube.contains_space(lat.space_nodes())
    tm = cube.contains_time(lat.times)
    return tm.reshape((-1,) + (1,) * lat.n) & sm[None]


def _check_boundary(u: GridFunction, domain: ParabolicCube, inner: ParabolicCube, tol: float) -> None:
    lat = u.lattice
    dmask = _space_time_mask(lat, domain)
    imask = _space_time_mask(lat, inner)
    bad = dmask & ~imask & (u.values > tol)
    if bad.any():
        idx = np.argwhere(bad)
        xs = lat.x1d
        nodes = [(tuple(float(xs[i]) for i in k[1:]), float(lat.times[k[0]])) for k in idx[:10]]
        raise PreconditionError(f"u > 0 at {len(idx)} nodes outside the inner cube, e.g. {nodes[:3]}", nodes)


def _second_differences(G: np.ndarray, h: float, n: int) -> np.ndarray:
    """Centered Hessian per node, shape G.shape + (n, n); G is zero-padded by one node."""
    P = np.pad(G, [(0, 0)] + [(1, 1)] * n)
    core = (slice(None),) + (slice(1, -1),) * n
    H = np.empty(G.shape + (n, n))
    for a in range(n):
        fwd = [slice(None)] + [slice(1, -1)] * n
        bwd = list(fwd)
        fwd[1 + a] = slice(2, None)
        bwd[1 + a] = slice(0, -2)
        H[..., a, a] = (P[tuple(fwd)] + P[tuple(bwd)] - 2 * P[core]) / h ** 2
        for b in range(a + 1, n):
            def sh(da, db):
                s = [slice(None)] + [slice(1, -1)] * n
                s[1 + a] = slice(1 + da, P.shape[1 + a] - 1 + da)
                s[1 + b] = slice(1 + db, P.shape[1 + b] - 1 + db)
                return P[tuple(s)]
            H[..., a, b] = H[..., b, a] = (sh(1, 1) - sh(1, -1) - sh(-1, 1) + sh(-1, -1)) / (4 * h ** 2)
    return H


def _det_minus(H: np.ndarray) -> np.ndarray:
    """det of the negative-semidefinite part: product of max(-eigenvalue, 0)."""
    if H.shape[-1] == 1:
        return np.maximum(-H[..., 0, 0], 0.0)
    ev = np.linalg.eigvalsh(H)
    return np.prod(np.maximum(-ev, 0.0), axis=-1)


def concave_envelope(u: GridFunction, domain: ParabolicCube, inner: ParabolicCube | None = None,
                     contact_tol: float | None = None, check: bool = True) -> EnvelopeResult:
    """Concave envelope of u+ over ``domain`` (zero on its parabolic boundary).

    ``inner`` is the cube outside of which u must be nonpositive; the check
    runs over lattice nodes of the domain and raises PreconditionError.
    """
    lat = u.lattice
    n, h = lat.n, lat.h_x
    scale = float(np.max(np.abs(u.values))) or 1.0
    tol = 1e-9 * scale if contact_tol is None else float(contact_tol)
    if check and inner is not None:
        _check_boundary(u, domain, inner, tol)
    xs = lat.space_nodes()
    smask = domain.contains_space(xs)
    tmask = domain.contains_time(lat.times)
    if not smask.any() or not tmask.any():
        raise ValueError("envelope domain contains no lattice nodes")
    dmask = tmask.reshape((-1,) + (1,) * n) & smask[None]
    tidx = np.nonzero(tmask)[0]
    pts = xs[smask]
    bpts = _boundary_points(domain, h)
    G = np.zeros(lat.shape)
    w = np.zeros(pts.shape[0])
    for m in tidx:
        w = np.maximum(w, np.maximum(u.values[m][smask], 0.0))
        if not np.any(w > 0):
            continue
        allp = np.concatenate([pts, bpts])
        allv = np.concatenate([w, np.zeros(len(bpts))])
        if n == 1:
            vals = concave_hull_1d(allp[:, 0], allv, pts[:, 0])
        else:
            vals = concave_hull_2d(allp, allv, pts)
        sl = np.zeros(smask.shape)
        sl[smask] = vals
        G[m] = sl
    # derived fields
    dt = np.zeros(lat.shape)
    prev = np.zeros(lat.shape[1:])
    for m in tidx:
        dt[m] = (G[m] - prev) / lat.h_t
        prev = G[m]
    dt = np.where(dmask, dt, 0.0)
    H = _second_differences(G, h, n)
    det = np.where(dmask, _det_minus(H), 0.0)
    P = np.pad(G, [(0, 0)] + [(1, 1)] * n)
    slope = np.zeros(lat.shape + (n,))
    for a in range(n):
        fwd = [slice(None)] + [slice(1, -1)] * n
        bwd = list(fwd)
        fwd[1 + a] = slice(2, None)
        bwd[1 + a] = slice(0, -2)
        slope[..., a] = np.where(dmask, (P[tuple(fwd)] - P[tuple(bwd)]) / (2 * h), 0.0)
    # contact where the envelope is active and touches u
    contact = dmask & (G > tol) & (G - u.values <= tol)
    gamma = GridFunction(lat, G, u.exterior, u.bound)
    return EnvelopeResult(gamma, contact, dt, det, slope, dmask, domain, inner, tol)


def _region_mask(env: EnvelopeResult, region) -> np.ndarray:
    if region is None:
        return env.domain_mask
    if isinstance(region, ParabolicCube):
        return env.domain_mask & _space_time_mask(env.lattice, region)
    mask = np.asarray(region, dtype=bool)
    if mask.shape != env.domain_mask.shape:
        raise ValueError("region mask does not match the lattice")
    return env.domain_mask & mask


def normal_map_measure(env: EnvelopeResult, region=None) -> float:
    """Cell sum of dGamma/dt * det(D^2 Gamma)^- over the region (cube, node mask or the whole domain)."""
    mask = _region_mask(env, region)
    return float(np.sum(env.density[mask])) * env.lattice.cell_volume


def normal_map_bruteforce_1d(env: EnvelopeResult, n_p: int = 801, n_h: int = 2001) -> float:
    """Area of the normal-map image by enumerating a (slope, intercept) grid; n = 1 only.

    For each slope p the support value H(p, t) = max_y (Gamma(y, t) - p y) is
    nondecreasing in t; the image holds the intercepts (H(p, t_prev), H(p, t)]
    at times where the maximiser is an interior node.
    """
    lat = env.lattice
    if lat.n != 1:
        raise ValueError("brute-force normal map is implemented for n = 1")
    smask = env.domain.contains_space(lat.space_nodes())
    x = lat.x1d[smask]
    bx = _boundary_points(env.domain, lat.h_x)[:, 0]
    tidx = np.nonzero(env.domain.contains_time(lat.times))[0]
    G = env.gamma.values
    pmax = float(np.max(np.abs(env.slope))) * 1.05 + 1e-12
    p = np.linspace(-pmax, pmax, n_p)
    ys = np.concatenate([x, bx])
    prevH = np.max(-p[:, None] * bx[None, :], axis=1)
    lo_all, hi_all, inner_all = [], [], []
    for m in tidx:
        vals = np.concatenate([G[m][smask], np.zeros(len(bx))])
        S = vals[None, :] - p[:, None] * ys[None, :]
        k = np.argmax(S, axis=1)
        H = S[np.arange(n_p), k]
        lo_all.append(prevH)
        hi_all.append(H)
        inner_all.append(k < len(x))
        prevH = H
    lo, hi, inn = np.array(lo_all), np.array(hi_all), np.array(inner_all)
    hmin, hmax = float(np.min(lo)), float(np.max(hi))
    hs = np.linspace(hmin, hmax, n_h)
    dh = hs[1] - hs[0] if n_h > 1 else 0.0
    dp = p[1] - p[0]
    total = 0
    for j in range(n_p):
        covered = np.zeros(n_h, dtype=bool)
        for a, b in zip(lo[inn[:, j], j], hi[inn[:, j], j]):
            if b > a:
                covered |= (hs > a) & (hs <= b)
        total += int(covered.sum())
    return total * dp * dh


def tso_ratio(sup_u_plus: float, measure: float, n: int) -> float:
    """(sup u+)^(n+1) / |normal map|; zero when u+ vanishes, inf when the measure does."""
    if sup_u_plus <= 0:
        return 0.0
    if measure <= 0:
        return math.inf
    return sup_u_plus ** (n + 1) / measure


# --------------------------------------------------------------------------
# contact-set diagnostics


def contact_sign_check(u: GridFunction, env: EnvelopeResult, radius: float = 1.0) -> dict:
    """Largest second difference mu(u, x, y, t) over contact nodes and lattice offsets |y| <= radius."""
    lat = u.lattice
    n, h = lat.n, lat.h_x
    J = max(1, int(math.floor(radius / h + 1e-9)))
    rng = np.arange(-J, J + 1)
    offs = np.stack(np.meshgrid(*([rng] * n), indexing="ij"), axis=-1).reshape(-1, n)
    # half space of offsets (mu is even in y), drop the origin
    keep = np.zeros(len(offs), dtype=bool)
    for k, o in enumerate(offs):
        nz = np.nonzero(o)[0]
        keep[k] = len(nz) > 0 and o[nz[0]] > 0 and np.sum(o * o) * h * h <= radius * radius + 1e-12
    offs = offs[keep]
    idx = np.argwhere(env.contact_mask)
    if len(idx) == 0:
        return {"max_mu": 0.0, "contact_nodes": 0, "offsets": int(len(offs)), "worst": None}
    worst, where = -math.inf, None
    for m in np.unique(idx[:, 0]):
        nodes = idx[idx[:, 0] == m][:, 1:]
        x = (nodes - lat.half_count) * h
        u0 = u.values[(m,) + tuple(nodes.T)]
        for s in range(0, len(offs), 256):
            y = offs[s:s + 256] * h
            vp = u.evaluate_slice(m, x[:, None, :] + y[None])
            vm = u.evaluate_slice(m, x[:, None, :] - y[None])
            mu = vp + vm - 2 * u0[:, None]
            k = np.unravel_index(np.argmax(mu), mu.shape)
            if mu[k] > worst:
                worst = float(mu[k])
                where = (x[k[0]].tolist(), y[k[1]].tolist(), float(lat.times[m]))
    return {"max_mu": worst, "contact_nodes": int(len(idx)), "offsets": int(len(offs)), "worst": where}


def ring_radii(rho: float, sigma: float, kmax: int) -> np.ndarray:
    """r_k = rho * 2^(-1/(2 - sigma) - k), k = 0..kmax+1."""
    k = np.arange(kmax + 2)
    return rho * 2.0 ** (-1.0 / (2.0 - sigma) - k)


def _ring_samples(r_out: float, r_in: float, n: int, m: int):
    """Quadrature points and weights for the ring r_in <= |y| < r_out."""
    if n == 1:
        s = r_in + (np.arange(m) + 0.5) * (r_out - r_in) / m
        pts = np.concatenate([s, -s])[:, None]
        return pts, np.full(2 * m, (r_out - r_in) / m)
    rad = r_in + (np.arange(m) + 0.5) * (r_out - r_in) / m
    na = 4 * m
    th = (np.arange(na) + 0.5) * 2 * math.pi / na
    R, T = np.meshgrid(rad, th, indexing="ij")
    pts = np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])
    wts = (R * (r_out - r_in) / m * 2 * math.pi / na).ravel()
    return pts, wts


def ring_diagnostic(u: GridFunction, x, t: float, rho: float, M: float, sigma: float, kmax: int = 6,
                    samples: int = 64) -> dict:
    """Fractions |{y in R_k : mu-(u, x, y, t) >= M r_k^2}| / |R_k| for k = 0..kmax.

    ``kmax`` is clipped so that the inner ring radius stays above the lattice
    step.  Returns the fractions and the minimising ring index.
    """
    lat = u.lattice
    m = int(round((t - lat.tau1) / lat.h_t))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    r = ring_radii(rho, sigma, kmax)
    usable = [k for k in range(kmax + 1) if r[k + 1] >= lat.h_x]
    u0 = u.evaluate_slice(m, x[None])[0]
    fracs = []
    for k in usable:
        pts, wts = _ring_samples(r[k], r[k + 1], lat.n, samples)
        mu = u.evaluate_slice(m, x[None] + pts) + u.evaluate_slice(m, x[None] - pts) - 2 * u0
        hit = np.maximum(-mu, 0.0) >= M * r[k] ** 2
        fracs.append(float(np.sum(wts[hit]) / np.sum(wts)))
    if not fracs:
        return {"radii": r.tolist(), "rings": [], "fractions": [], "k_min": None, "min_fraction": None}
    j = int(np.argmin(fracs))
    return {"radii": r.tolist(), "rings": usable, "fractions": fracs, "k_min": usable[j], "min_fraction": fracs[j]}


def _field(f, lat: LatticeSpec) -> np.ndarray:
    if isinstance(f, GridFunction):
        if f.lattice.shape != lat.shape:
            raise ValueError("forcing lattice does not match u")
        return np.asarray(f.values)
    arr = np.asarray(f, dtype=float)
    if arr.shape != lat.shape:
        raise ValueError("forcing array does not match the lattice")
    return arr


def cube_cover(env: EnvelopeResult, f, constant: float = 1.0, rho0: float = 0.5, sigma: float = 1.0,
               sup_f_Q1: float | None = None, min_side: float | None = None) -> list:
    """Disjoint dyadic space-time cubes covering the contact set.

    Cubes start at side ``rho0 * 2^(-1/(2 - sigma))`` (half the size cap) and
    are halved until |N(K)| <= constant * (sup_K f + r sup f)^(n+1) |C cap K|
    holds with r = 2 * side, or the side reaches ``min_side``.
    """
    lat = env.lattice
    n = lat.n
    F = _field(f, lat)
    supQ = float(np.max(F[env.domain_mask])) if sup_f_Q1 is None else float(sup_f_Q1)
    side0 = rho0 * 2.0 ** (-1.0 / (2.0 - sigma))
    min_side = 2 * lat.h_x if min_side is None else float(min_side)
    idx = np.argwhere(env.domain_mask)
    coords = np.column_stack([(idx[:, 1:] - lat.half_count) * lat.h_x, lat.times[idx[:, 0]]])
    origin = np.array([-lat.X] * n + [lat.tau1])
    dens = env.density[tuple(idx.T)]
    fv = F[tuple(idx.T)]
    cont = env.contact_mask[tuple(idx.T)]
    cv = lat.cell_volume
    out = []

    def visit(sel: np.ndarray, corner: np.ndarray, side: float):
        r = 2 * side
        nm = float(np.sum(dens[sel])) * cv
        cm = float(np.count_nonzero(cont[sel])) * cv
        fs = float(np.max(fv[sel]))
        bound = constant * (fs + r * supQ) ** (n + 1) * cm
        ok = nm <= bound
        if ok or side / 2 < min_side:
            out.append({"corner": corner.tolist(), "side": side, "r": r, "normal_map": nm, "contact_measure": cm,
                        "f_sup": fs, "bound": bound, "satisfied": bool(ok),
                        "xi_r": r * r * (fs + r * supQ)})
            return
        half = side / 2
        sub = np.floor((coords[sel] - corner) / half + 1e-12).astype(int).clip(0, 1)
        ids = np.nonzero(sel)[0]
        for code in np.unique(sub @ (1 << np.arange(n + 1))):
            child = ids[(sub @ (1 << np.arange(n + 1))) == code]
            if not np.any(cont[child]):
                continue
            bits = np.array([(code >> a) & 1 for a in range(n + 1)])
            m = np.zeros(len(coords), dtype=bool)
            m[child] = True
            visit(m, corner + bits * half, half)

    cells = np.floor((coords - origin) / side0 + 1e-12).astype(int)
    for key in sorted({tuple(c) for c in cells[cont]}):
        sel = np.all(cells == np.array(key), axis=1)
        visit(sel, origin + np.array(key) * side0, side0)
    return out


@dataclass
class AbpReport:
    sup_u_plus: float
    normal_map_total: float
    tso_ratio: float
    gamma_t_sup: float
    f_sup: float
    gamma_t_ratio: float
    contact_nodes: int
    contact_max_mu: float
    ring_tables: list = field(default_factory=list)
    cube_cover: list = field(default_factory=list)
    xi_r: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def abp_diagnostics(u: GridFunction, f, env: EnvelopeResult, sigma: float, region: ParabolicCube | None = None,
                    rho: float = 0.5, ring_M: float = 1.0, ring_points: int = 4, rho0: float = 0.5,
                    cover_constant: float = 1.0, sign_radius: float = 1.0) -> AbpReport:
    """Tso ratio, dGamma/dt control, contact sign sweep, ring tables and the cube cover.

    ``region`` defaults to the unit cube Q_1 sharing the envelope domain's anchor.
    """
    lat = u.lattice
    F = _field(f, lat)
    if region is None:
        region = ParabolicCube(env.domain.anchor, 1.0, env.domain.sigma, "Q")
    rmask = _region_mask(env, region)
    flags = []
    sup_u = float(max(0.0, np.max(u.values[rmask]))) if rmask.any() else 0.0
    nm = normal_map_measure(env, region)
    cont = env.contact_mask & rmask
    if not cont.any():
        flags.append("empty contact set")
    f_sup = float(np.max(F[rmask])) if rmask.any() else 0.0
    if cont.any() and np.min(F[cont]) <= 0:
        flags.append("forcing not positive on the contact set")
    gt = float(np.max(env.dt_gamma[rmask])) if rmask.any() else 0.0
    ratio = gt / f_sup if f_sup > 0 else (0.0 if gt <= 0 else math.inf)
    sign = contact_sign_check(u, env, sign_radius)
    rings = []
    if cont.any() and ring_points > 0:
        idx = np.argwhere(cont)
        pick = idx[np.linspace(0, len(idx) - 1, min(ring_points, len(idx))).astype(int)]
        for k in pick:
            x = (k[1:] - lat.half_count) * lat.h_x
            t = float(lat.times[k[0]])
            d = ring_diagnostic(u, x, t, rho, ring_M, sigma)
            fx = float(F[tuple(k)])
            d.update({"x": x.tolist(), "t": t, "f": fx,
                      "implied_constant": (d["min_fraction"] * ring_M / fx) if d["min_fraction"] is not None and fx > 0
                      else None})
            rings.append(d)
    cover = cube_cover(env, F, cover_constant, rho0, sigma) if cont.any() else []
    if any(not c["satisfied"] for c in cover):
        flags.append("cube cover reached the lattice scale with unsatisfied cubes")
    return AbpReport(sup_u, nm, tso_ratio(sup_u, nm, lat.n), gt, f_sup, ratio, int(cont.sum()), sign["max_mu"],
                     rings, cover, [c["xi_r"] for c in cover], flags)


# --------------------------------------------------------------------------
# forward sup-convolution


def sup_convolution(u: GridFunction, eps: float) -> GridFunction:
    """u^eps(x, t) = max over nodes (y, s), s >= t, |x-y|^2 + (s-t) <= eps^2 of u(y, s) + sqrt(eps^2 - |x-y|^2 - (s-t)).

    Only lattice nodes are candidates, so the result lives on the same lattice.
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    lat = u.lattice
    n, h, ht = lat.n, lat.h_x, lat.h_t
    V = np.asarray(u.values)
    e2 = eps * eps
    J = int(math.floor(eps / h + 1e-12))
    S = int(math.floor(e2 / ht + 1e-12))
    out = V.copy() + eps
    for ds in range(S + 1):
        for off in np.ndindex(*([2 * J + 1] * n)):
            dy = np.array(off) - J
            slack = e2 - float(np.sum(dy * dy)) * h * h - ds * ht
            if slack < 0 or (ds == 0 and not dy.any()):
                continue
            src = [slice(ds, None)]
            dst = [slice(0, lat.nt - ds)]
            for d in dy:
                if d >= 0:
                    src.append(slice(d, None))
                    dst.append(slice(0, lat.nx - d))
                else:
                    src.append(slice(0, lat.nx + d))
                    dst.append(slice(-d, None))
            cand = V[tuple(src)] + math.sqrt(slack)
            np.maximum(out[tuple(dst)], cand, out=out[tuple(dst)])
    return GridFunction(lat, out, u.exterior, None)


def lipschitz_estimate(u: GridFunction) -> float:
    """Largest neighbour difference quotient in the Euclidean (x, t) metric (a lower bound for Lip(u))."""
    lat = u.lattice
    V = np.asarray(u.values)
    best = 0.0
    steps = [lat.h_t] + [lat.h_x] * lat.n
    for a, s in enumerate(steps):
        if V.shape[a] > 1:
            best = max(best, float(np.max(np.abs(np.diff(V, axis=a)))) / s)
    return best
