"""Acceptance matrix: thirteen property and oracle checks with runtime budgets.

Each ``criterion_<k>`` returns a :class:`CriterionResult`.  ``details`` holds
only deterministic quantities, so reports built from it are reproducible
byte for byte; wall-clock time is kept in ``elapsed`` and reported apart.
Keyword arguments shrink or grow a check (family sizes, resolutions); the
defaults are the full-size settings.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import families as fam
from .barriers import SearchFailure, parameter_search, verify_subsolution
from .envelope import abp_diagnostics, concave_envelope, normal_map_measure, sup_convolution
from .estimators import calibrate_decay, decay_bound_holds, decay_fit, harnack_quotient, holder_fit, \
    sublevel_fraction
from .evolution import EvolutionProblem, build_operator, cfl_timestep, solve
from .geometry import ParabolicCube, Point, cz_decompose, union_measure
from .gridfn import GridFunction, LatticeSpec, sample
from .kernels import build_weight_table, extremal_kernel
from .operators import DiscreteOperator

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "tent_oracle_measure"]


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    budget: float = 0.0
    elapsed: float = 0.0

    @property
    def within_budget(self) -> bool:
        return self.elapsed <= self.budget

    def line(self) -> str:
        verdict = "PASS" if self.passed and self.within_budget else "FAIL"
        return f"[{verdict}] criterion {self.id:2d} {self.name}: {self.elapsed:.1f}s of {self.budget:.0f}s budget"

    def report(self) -> dict:
        """Deterministic part of the result."""
        return {"id": self.id, "name": self.name, "passed": bool(self.passed), "budget_s": self.budget,
                "details": self.details}


def _f(x) -> float:
    """Rounded float for reports (stable under last-bit noise in summaries)."""
    x = float(x)
    if not math.isfinite(x):
        return x
    return float(f"{x:.12g}")


# --------------------------------------------------------------------------
# 1. operator exactness on x^2


def criterion_1(sigmas=(0.5, 1.0, 1.5, 1.9), h_x: float = 1 / 128) -> CriterionResult:
    rows = []
    for s in sigmas:
        lat = LatticeSpec(1, h_x, 1.0, 2.0, 0.0, 1.0, s)
        tab = build_weight_table(extremal_kernel(s, 1.0, 1), lat, 1.0)
        u = sample(lambda x, t: x[..., 0] ** 2 + 0 * t, lat)
        val = DiscreteOperator("linear", tab, zero_tail=True).apply(u, 0).values[0][lat.half_count]
        rows.append({"sigma": s, "value": _f(val), "rel_error": _f(abs(val - 4.0) / 4.0)})
    ok = all(r["rel_error"] < 0.01 for r in rows)
    return CriterionResult(1, "operator exactness", ok, {"oracle": 4.0, "rows": rows}, 5.0)


# --------------------------------------------------------------------------
# 2. sandwich and duality


def _random_setting(rng, k: int):
    n = 2 if k % 5 == 4 else 1
    # small orders need long tail grids; the planar cases stay above 1/2 to bound the cost
    sigma = float(rng.uniform(0.1 if n == 1 else 0.5, 1.95))
    lam = float(rng.uniform(0.5, 1.0))
    Lam = lam * float(rng.uniform(1.0, 3.0))
    h = 1 / 32 if n == 1 else 1 / 8
    return n, sigma, lam, Lam, h


def criterion_2(count: int = 100, seed: int = 2) -> CriterionResult:
    viol_sandwich = viol_dual = 0
    worst_dual = 0.0
    for k in range(count):
        rng = fam.rng_for(seed, 2, k)
        n, sigma, lam, Lam, h = _random_setting(rng, k)
        lat = LatticeSpec(n, h, 1.0, 2.0, 0.0, 1.0, sigma)
        R = 0.5
        K = fam.random_kernel(rng, sigma, lam, Lam, n)
        tk = build_weight_table(K, lat, R)
        pair = (build_weight_table(extremal_kernel(sigma, lam, n), lat, R),
                build_weight_table(extremal_kernel(sigma, Lam, n), lat, R))
        u = fam.random_grid_function(rng, lat)
        neg = GridFunction(lat, -u.values, lambda x, t, e=u.exterior: -e(x, t), u.bound)
        L = DiscreteOperator("linear", tk).apply(u, 0).values
        Mp = DiscreteOperator("M+", pair).apply(u, 0).values
        Mm = DiscreteOperator("M-", pair).apply(u, 0).values
        Mp_neg = DiscreteOperator("M+", pair).apply(neg, 0).values
        viol_sandwich += int(np.count_nonzero(Mm > L) + np.count_nonzero(L > Mp))
        err = float(np.max(np.abs(Mp_neg + Mm)))
        worst_dual = max(worst_dual, err)
        viol_dual += int(err > 1e-13)
    ok = viol_sandwich == 0 and viol_dual == 0
    return CriterionResult(2, "sandwich and duality", ok,
                           {"pairs": count, "sandwich_violations": viol_sandwich, "duality_violations": viol_dual,
                            "max_duality_error": _f(worst_dual)}, 30.0)


# --------------------------------------------------------------------------
# 3. discrete comparison


def _comparison_operator(rng, k: int, n: int, sigma: float, lam: float, Lam: float, lat):
    kind = ("linear", "M+", "M-", "infsup")[k % 4]
    R = 0.5
    if kind == "linear":
        return DiscreteOperator("linear", build_weight_table(fam.random_kernel(rng, sigma, lam, Lam, n), lat, R))
    if kind in ("M+", "M-"):
        pair = (build_weight_table(extremal_kernel(sigma, lam, n), lat, R),
                build_weight_table(extremal_kernel(sigma, Lam, n), lat, R))
        return DiscreteOperator(kind, pair)
    fam2 = [[build_weight_table(fam.random_kernel(rng, sigma, lam, Lam, n), lat, R) for _ in range(2)]
            for _ in range(2)]
    return DiscreteOperator("infsup", fam2)


def criterion_3(count: int = 100, steps: int = 200, seed: int = 3) -> CriterionResult:
    violations = 0
    min_gap = math.inf
    kinds = {}
    for k in range(count):
        rng = fam.rng_for(seed, 3, k)
        n, sigma, lam, Lam, _ = _random_setting(rng, k)
        h = 1 / 16 if n == 1 else 1 / 4
        lat = LatticeSpec(n, h, 1.0, 2.0, 0.0, 1.0, sigma)
        op = _comparison_operator(rng, k, n, sigma, lam, Lam, lat)
        kinds[op.kind] = kinds.get(op.kind, 0) + 1
        lo, hi = fam.ordered_pair(rng, n)
        T = steps * cfl_timestep(op, 0.9)
        runs = []
        for data in (lo, hi):
            prob = EvolutionProblem(op.kind, sigma, n, lam, Lam, h_x=h, X=2.0, R_out=0.5, T=T,
                                    domain=("box", 0.75), initial=data["initial"], exterior=data["exterior"])
            runs.append(solve(prob, op))
        assert runs[0].steps == steps
        d = runs[1].u.values - runs[0].u.values
        violations += int(np.count_nonzero(d < 0))
        min_gap = min(min_gap, float(d.min()))
    return CriterionResult(3, "discrete comparison", violations == 0,
                           {"pairs": count, "steps": steps, "violations": violations, "min_gap": _f(min_gap),
                            "operators": dict(sorted(kinds.items()))}, 60.0)


# --------------------------------------------------------------------------
# 4. barrier verification


def criterion_4(sigmas=(1.5, 1.9), h_x: float = 1 / 128, confirm_h_x: float = 1 / 256) -> CriterionResult:
    rows = []
    for s in sigmas:
        try:
            p, rep = parameter_search(s, 1, h_x=h_x, confirm_h_x=confirm_h_x)
            fine = verify_subsolution(p, h_x=confirm_h_x)
            rows.append({"sigma": s, "found": True, "params": {k: _f(v) if isinstance(v, float) else v
                                                              for k, v in p.to_dict().items()},
                         "checks": list(rep.passed), "checks_fine": list(fine.passed),
                         "stable": bool(rep.ok == fine.ok), "passed": bool(rep.ok and fine.ok)})
        except SearchFailure as e:
            best = e.best or {}
            rows.append({"sigma": s, "found": False, "passed": False, "reason": str(e),
                         "best_score": _f(best.get("score", float("nan")))})
    return CriterionResult(4, "barrier verification", all(r["passed"] for r in rows), {"rows": rows}, 600.0)


# --------------------------------------------------------------------------
# 5 and 6. ABP pipeline on constructed subsolutions


def abp_instance(k: int, h: float, sigma: float = 1.5, T: float = 1.0, ops: dict | None = None):
    """Envelope and report for constructed subsolution ``k`` on a lattice with h_x = h_t = h.

    The forcing is the discrete residual u_t - M+u (backward in time), so the
    sample solves the discrete equation exactly with that right-hand side.
    """
    lat = LatticeSpec(1, h, h, 2.0, 0.0, T, sigma)
    if ops is None or h not in ops:
        pair = (build_weight_table(extremal_kernel(sigma, 1.0, 1), lat, 2.0),
                build_weight_table(extremal_kernel(sigma, 2.0, 1), lat, 2.0))
        op = DiscreteOperator("M+", pair)
        if ops is not None:
            ops[h] = op
    else:
        op = ops[h]
    u = sample(fam.constructed_subsolution(k, sigma, T), lat)
    Mu = op.apply(u).values
    ut = np.zeros(lat.shape)
    ut[1:] = (u.values[1:] - u.values[:-1]) / lat.h_t
    f = ut - Mu
    anchor = Point((0.0,), T)
    env = concave_envelope(u, ParabolicCube(anchor, 2.0, sigma, "Q"), ParabolicCube(anchor, 0.5, sigma, "Q"))
    rep = abp_diagnostics(u, f, env, sigma, ring_points=0)
    return u, f, env, rep


def tent_oracle_measure(h: float) -> float:
    """Normal-map measure of t(1 - x^2) on B_1 x (0, 1]; the closed form is 4/3."""
    lat = LatticeSpec(1, h, h, 2.0, 0.0, 1.0, 1.0)
    u = sample(lambda x, t: t * (1 - x[..., 0] ** 2), lat)
    dom = ParabolicCube(Point((0.0,), 1.0), 1.0, 1.0, "Q")
    env = concave_envelope(u, dom)
    return normal_map_measure(env)


def criterion_5(members: int = 5, resolutions=(1 / 32, 1 / 64, 1 / 128), sigma: float = 1.5) -> CriterionResult:
    ops = {}
    table = []
    max_mu = -math.inf
    for k in range(members):
        ratios = []
        for h in resolutions:
            _, _, _, rep = abp_instance(k, h, sigma, ops=ops)
            ratios.append(rep.tso_ratio)
            max_mu = max(max_mu, rep.contact_max_mu)
        finite = all(math.isfinite(r) and r > 0 for r in ratios)
        spread = max(ratios) / min(ratios) if finite else math.inf
        table.append({"member": k, "tso_ratios": [_f(r) for r in ratios], "spread": _f(spread),
                      "stable": bool(finite and spread < 2.0)})
    nm = tent_oracle_measure(resolutions[-1])
    rel = abs(nm - 4 / 3) / (4 / 3)
    ok = all(r["stable"] for r in table) and max_mu <= 1e-9 and rel < 0.02
    return CriterionResult(5, "ABP/Tso stability", ok,
                           {"members": table, "contact_max_mu": _f(max_mu), "oracle_measure": _f(nm),
                            "oracle_rel_error": _f(rel)}, 300.0)


def criterion_6(h: float = 1 / 64, sigma: float = 1.5, calibration=(0, 1, 2), fresh=(3, 5, 6)) -> CriterionResult:
    ops = {}

    def ratio(k):
        _, _, _, rep = abp_instance(k, h, sigma, ops=ops)
        return rep.gamma_t_ratio

    cal = [ratio(k) for k in calibration]
    C_fit = max(cal)
    ver = [ratio(k) for k in fresh]
    ok = math.isfinite(C_fit) and all(r <= 1.5 * C_fit for r in ver)
    return CriterionResult(6, "time-derivative control", ok,
                           {"calibration_ratios": [_f(r) for r in cal], "C_fit": _f(C_fit),
                            "fresh_ratios": [_f(r) for r in ver], "allowed": _f(1.5 * C_fit)}, 120.0)


# --------------------------------------------------------------------------
# 7. Calderon-Zygmund measure inequality


def criterion_7(count: int = 50, delta=Fraction(1, 2), ms=(1, 2, 3), seed: int = 7) -> CriterionResult:
    violations = 0
    checked = 0
    worst = None
    for k in range(count):
        rng = fam.rng_for(seed, 7, k)
        A = fam.random_dyadic_union(rng, n=1, max_depth=3)
        a_meas = union_measure(A)
        for m in ms:
            _, region = cz_decompose(A, delta, m)
            lhs = region.measure
            rhs = Fraction(m, m + 1) / delta * a_meas
            checked += 1
            if not isinstance(lhs, Fraction) or lhs < rhs:
                violations += 1
            slack = lhs - rhs
            if worst is None or slack < worst:
                worst = slack
    return CriterionResult(7, "Calderon-Zygmund inequality", violations == 0,
                           {"unions": count, "checks": checked, "violations": violations,
                            "min_slack": str(worst)}, 30.0)


# --------------------------------------------------------------------------
# 8 and 9. supersolution family: level-set decay and the sublevel measure bound


def _supersolution_runs(seed: int, count: int, offset: int, h: float, sigma: float = 1.5):
    """Normalised trajectories v = u / inf_{K+} u of u_t = M-u + f, f >= 0, zero exterior."""
    out = []
    op = None
    for d in fam.supersolution_family(seed, count, offset):
        prob = EvolutionProblem("M-", sigma, 1, 1.0, 2.0, h_x=h, R_out=1.0, T=1.0, domain=("box", 1.5),
                                initial=d["initial"], forcing=d["forcing"], stride=8)
        op = op or build_operator(prob)
        u = solve(prob, op).u
        s = sublevel_fraction(u, 1.0)["inf_Kplus"]
        if not s > 0:
            raise RuntimeError("supersolution run is not positive on K+")
        out.append(GridFunction(u.lattice, u.values / s))
    return out


def criterion_8(count: int = 10, h: float = 1 / 64, seed: int = 8, sigma: float = 1.5) -> CriterionResult:
    runs = _supersolution_runs(seed, count, 0, h, sigma)
    region = ParabolicCube(Point((0.0,), 0.0), 1.0, sigma, "rQ")
    rm = region.measure()
    s_grid = np.geomspace(1.0, 50.0, 16)
    fits = [decay_fit(v, region, s_grid) for v in runs]
    rows = [{"eps_star": _f(f.eps_star_fit) if f.eps_star_fit is not None else None,
             "r_squared": _f(f.r_squared) if f.r_squared is not None else None, "degenerate": f.degenerate}
            for f in fits]
    good = all(not f.degenerate and f.eps_star_fit > 0 and f.r_squared >= 0.9 for f in fits)
    half = count // 2
    C, eps = calibrate_decay(fits[:half], rm) if good else (math.nan, math.nan)
    checks = [decay_bound_holds(f, C, eps, rm) for f in fits[half:]] if good else []
    ok = good and all(c[0] for c in checks)
    return CriterionResult(8, "decay exponent", ok,
                           {"fits": rows, "C": _f(C), "eps_star": _f(eps),
                            "verification_ratios": [_f(c[1]) for c in checks]}, 600.0)


def criterion_9(count: int = 10, h: float = 1 / 64, nu: float = 0.5, safety: float = 2.0, seed: int = 9,
                sigma: float = 1.5) -> CriterionResult:
    runs = _supersolution_runs(seed, count, 0, h, sigma)
    half = count // 2
    r0 = 1 / 9
    km = ParabolicCube(Point((0.0,), 0.0), r0, sigma, "K-")
    quant = [float(np.quantile(v.values[v.node_mask(km)], nu)) for v in runs[:half]]
    M = safety * max(quant)
    fr = [sublevel_fraction(v, M, r0) for v in runs[half:]]
    ok = all(d["inf_Kplus"] <= 1 + 1e-12 and d["fraction"] >= nu for d in fr)
    return CriterionResult(9, "sublevel measure harness", ok,
                           {"nu": nu, "M": _f(M), "eps0": 0.0, "training_quantiles": [_f(q) for q in quant],
                            "verification_fractions": [_f(d["fraction"]) for d in fr]}, 300.0)


# --------------------------------------------------------------------------
# 10. Harnack quotient


def criterion_10(count: int = 20, resolutions=(1 / 32, 1 / 64), seed: int = 10, sigma: float = 1.5) -> CriterionResult:
    data = fam.positive_family(seed, count)
    per_h = []
    for h in resolutions:
        op = None
        qs = []
        for d in data:
            prob = EvolutionProblem("M+", sigma, 1, 1.0, 2.0, h_x=h, R_out=1.0, T=1.5, domain=("box", 1.5),
                                    initial=d["initial"], exterior=d["exterior"], stride=4)
            op = op or build_operator(prob)
            qs.append(harnack_quotient(solve(prob, op).u, 0.0))
        per_h.append(qs)
    maxima = [max(q) for q in per_h]
    finite = all(math.isfinite(m) for m in maxima)
    change = max(maxima) / min(maxima) if finite else math.inf
    return CriterionResult(10, "Harnack boundedness", finite and change < 2.0,
                           {"max_quotients": [_f(m) for m in maxima], "change": _f(change),
                            "quotients": [[_f(q) for q in qs] for qs in per_h]}, 600.0)


# --------------------------------------------------------------------------
# 11. oscillation decay from checkerboard data


def criterion_11(resolutions=(1 / 32, 1 / 64, 1 / 128), width: float = 0.125, depth: int = 6,
                 sigma: float = 1.5) -> CriterionResult:
    g, ext = fam.checkerboard(width)
    rows = []
    for h in resolutions:
        prob = EvolutionProblem("M+", sigma, 1, 1.0, 2.0, h_x=h, R_out=1.0, T=2.0, domain=("box", 2.0),
                                initial=g, exterior=ext, stride=4)
        fit = holder_fit(solve(prob).u, Point((0.0,), 1.0), depth)
        rows.append({"h_x": h, "kappa": _f(fit.kappa), "alpha_fit": _f(fit.alpha_fit),
                     "ratios": [_f(r) for r in fit.ratios]})
    ks = [r["kappa"] for r in rows]
    ref = ks[-1]
    stable = ref > 0 and all(abs(k - ref) <= 0.5 * ref for k in ks)
    ok = stable and all(r["alpha_fit"] > 0 for r in rows)
    return CriterionResult(11, "Holder decay", ok, {"rows": rows}, 600.0)


# --------------------------------------------------------------------------
# 12. sup-convolution


def criterion_12(count: int = 10, eps_list=(0.2, 0.1, 0.05), seed: int = 12) -> CriterionResult:
    bad = {"below": 0, "monotone": 0, "error": 0}
    worst = 0.0
    for k in range(count):
        rng = fam.rng_for(seed, 12, k)
        n = 1 if k % 2 == 0 else 2
        h = 1 / 64 if n == 1 else 1 / 16
        f, L = fam.lipschitz_sample(rng, n)
        lat = LatticeSpec(n, h, h * h if n == 1 else h / 4, 2.0, 0.0, 0.25, 1.5)
        u = sample(f, lat)
        prev = None
        for e in sorted(eps_list):
            ue = sup_convolution(u, e).values
            bad["below"] += int(np.count_nonzero(ue < u.values))
            if prev is not None:
                bad["monotone"] += int(np.count_nonzero(prev > ue))
            err = float(np.max(ue - u.values))
            worst = max(worst, err / (e * (1 + L)))
            bad["error"] += int(err > e * (1 + L) + 1e-12)
            prev = ue
    return CriterionResult(12, "sup-convolution properties", not any(bad.values()),
                           {"samples": count, "violations": bad, "max_error_over_bound": _f(worst)}, 30.0)


# --------------------------------------------------------------------------
# 13. determinism of the suite command


def criterion_13(config: dict | None = None, workdir=None) -> CriterionResult:
    import tempfile
    from pathlib import Path

    from .cli import main

    config = config or {"seed": 13, "matrix": [{"id": 1}, {"id": 7, "count": 10}, {"id": 12, "count": 2}]}
    base = Path(workdir or tempfile.mkdtemp(prefix="nlp-suite-"))
    blobs = []
    codes = []
    for rep in ("a", "b"):
        out = base / rep
        out.mkdir(parents=True, exist_ok=True)
        cfg = out / "suite.json"
        import json
        cfg.write_text(json.dumps(config))
        codes.append(main(["suite", "--config", str(cfg), "--out", str(out / "run")]))
        blobs.append((out / "run" / "suite_report.json").read_bytes())
    same = blobs[0] == blobs[1]
    return CriterionResult(13, "determinism", same and codes[0] == codes[1],
                           {"identical": same, "exit_codes": codes, "bytes": len(blobs[0])}, 2700.0)


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
            7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11,
            12: criterion_12, 13: criterion_13}


def run_criterion(cid: int, **kwargs) -> CriterionResult:
    if cid not in CRITERIA:
        raise KeyError(f"unknown criterion {cid}")
    t0 = time.perf_counter()
    res = CRITERIA[cid](**kwargs)
    res.elapsed = time.perf_counter() - t0
    return res
