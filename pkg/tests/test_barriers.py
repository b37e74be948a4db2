import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlparabolic.barriers import (BarrierParams, SearchFailure, barrier_f, barrier_psi, heat_majorant,
                                  parameter_search, special_function_Psi, verify_subsolution)

P = BarrierParams(1.9, 1, alpha=0.05, gamma=4.0, zeta=1e-3, A=2.0, c=3.0)


@pytest.fixture(scope="module")
def tuned():
    return parameter_search(1.9, 1, h_x=1 / 64)


def test_majorant_vanishes_as_time_decreases():
    x = np.array([[0.5]])
    vals = [float(heat_majorant(x, t, P)[0]) for t in (1e-2, 1e-3, 1e-4)]
    assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-12


def test_majorant_saturates_at_origin():
    # (4 pi t)^(-n/sigma) >= cap  iff  t <= cap^(-sigma/n) / (4 pi)
    t_sat = P.cap ** (-P.sigma / P.n) / (4 * math.pi)
    o = np.zeros((1, 1))
    assert heat_majorant(o, 0.99 * t_sat, P)[0] == P.cap
    assert heat_majorant(o, 1.01 * t_sat, P)[0] < P.cap


def test_majorant_rejects_nonpositive_time():
    with pytest.raises(ValueError):
        heat_majorant(np.zeros((1, 1)), 0.0, P)


def test_majorant_monotone_in_radius():
    x = np.linspace(0, 2, 50)[:, None]
    v = heat_majorant(x, 0.3, P)
    assert np.all(np.diff(v) <= 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(-0.5, 1.0))
def test_psi_clamps(x, t):
    pt = np.array([[x]])
    v = float(barrier_psi(pt, t, P)[0])
    assert v >= 0 and v <= P.A * max(t, 0.0) + 1e-15
    if t <= 0 or float(barrier_f(pt, t, P)[0]) <= P.zeta:
        assert v == 0.0
    assert float(special_function_Psi(pt, t, P)[0]) == P.c * v


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(1e-3, 1.0))
def test_cap_monotone_in_delta(x, t):
    pt = np.array([[x]])
    vals = [float(barrier_f(pt, t, BarrierParams(1.5, 1, delta=d))[0]) for d in (0.5, 0.25, 0.1)]
    assert vals[0] <= vals[1] <= vals[2]


def test_zero_barrier_fails_positivity():
    p = BarrierParams(1.9, 1, zeta=1e9, A=1.0, c=1.0)
    rep = verify_subsolution(p, h_x=1 / 64, h_t=1 / 16)
    assert rep.min_subsolution_residual == 0.0
    assert rep.passed[0] and not rep.passed[1] and rep.passed[2]


def test_coarse_lattice_rejected():
    with pytest.raises(ValueError):
        verify_subsolution(P, h_x=1 / 8)


def test_search_succeeds_and_is_deterministic(tuned):
    p, rep = tuned
    assert rep.ok and rep.min_on_Kplus > 2.0
    p2, _ = parameter_search(1.9, 1, h_x=1 / 64)
    assert p2 == p


def test_verdict_stable_under_refinement(tuned):
    p, _ = tuned
    assert verify_subsolution(p, h_x=1 / 128).ok


def test_search_failure_is_structured():
    grid = {"alpha_scale": [1.0], "gamma": [1.0], "beta": [0.0], "delta": [0.5], "tau": [0.05]}
    with pytest.raises(SearchFailure) as info:
        parameter_search(0.3, 1, h_x=1 / 64, grid=grid)
    assert "score" in info.value.best


def test_invalid_params():
    with pytest.raises(ValueError):
        BarrierParams(1.5, 1, r=0.6)
    with pytest.raises(ValueError):
        BarrierParams(1.5, 1, delta=1.0)
