import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlparabolic.evolution import EvolutionProblem, build_operator, cfl_timestep, solve
from nlparabolic.families import ordered_pair, rng_for


def problem(**kw):
    base = dict(operator="M+", sigma=1.0, n=1, lam=0.5, Lam=2.0, h_x=1 / 16, R_out=0.5, T=0.02)
    base.update(kw)
    return EvolutionProblem(**base)


def test_constant_data_is_stationary():
    c = lambda x, t=0.0: np.full(np.asarray(x).shape[:-1], 1.5)
    tr = solve(problem(initial=c, exterior=c))
    assert np.all(tr.u.values == 1.5)


def test_time_linear_solution_with_unit_source():
    # u = t solves u_t = Op u + 1 with exterior t
    tr = solve(problem(operator="linear", exterior=lambda x, t: np.full(np.asarray(x).shape[:-1], t),
                       forcing=lambda x, t: np.ones(np.asarray(x).shape[:-1])))
    assert np.allclose(tr.u.values, tr.u.lattice.times.reshape(-1, 1), atol=1e-12)


def test_timestep_respects_cfl():
    p = problem()
    op = build_operator(p)
    tr = solve(p, op)
    assert tr.dt <= cfl_timestep(op, p.cfl_safety) * (1 + 1e-12)
    assert all(d["cfl_margin"] > 0 for d in tr.diagnostics)


@pytest.mark.parametrize("bad", [0.0, 1.0, 1.5])
def test_cfl_safety_validated(bad):
    with pytest.raises(ValueError):
        problem(cfl_safety=bad)


def test_stride_thins_snapshots():
    p = problem(stride=4)
    tr = solve(p)
    assert tr.steps == 4 * (tr.u.lattice.nt - 1)


def test_maximum_principle():
    g = lambda x: np.sin(7 * x[..., 0])
    e = lambda x, t: 0.5 * np.cos(np.clip(x[..., 0], -4, 4))
    tr = solve(problem(initial=g, exterior=e, T=0.05))
    assert np.max(np.abs(tr.u.values)) <= 1.0 + 1e-12


def test_nonfinite_reported():
    with pytest.raises(FloatingPointError):
        solve(problem(initial=lambda x: np.where(x[..., 0] > 0.5, np.inf, 0.0)))


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["linear", "M+", "M-"]))
def test_comparison_principle(seed, kind):
    lo, hi = ordered_pair(rng_for(seed), 1)
    op = build_operator(problem(operator=kind))
    runs = [solve(problem(operator=kind, initial=d["initial"], exterior=d["exterior"]), op) for d in (lo, hi)]
    assert np.all(runs[1].u.values >= runs[0].u.values)
