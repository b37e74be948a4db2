import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlparabolic.gridfn import LatticeSpec
from nlparabolic.kernels import (KernelSpec, build_weight_table, extremal_kernel, interpolated_kernel,
                                 smoothness_seminorm, tail_mass_reference, validate_bounds)
from nlparabolic.families import random_kernel, rng_for


def lat(n, h):
    return LatticeSpec(n, h, 1.0, 2.0, 0.0, 1.0, 1.0)


def test_power_kernel_hand_value():
    # (2 - 1) * 1 * 2^(-2)
    K = extremal_kernel(1.0, 1.0, 1)
    assert K(np.array([[2.0]]))[0] == pytest.approx(0.25)
    assert K(np.array([[-2.0]]))[0] == K(np.array([[2.0]]))[0]
    assert validate_bounds(K, np.linspace(-3, 3, 10))["passed"]


def test_zero_kernel_fails_bounds():
    K = KernelSpec(1.0, 1.0, 2.0, lambda y: np.zeros(y.shape[:-1]))
    rep = validate_bounds(K, np.linspace(0.1, 3, 20))
    assert not rep["passed"] and len(rep["violations"]) == 20


def test_asymmetric_kernel_reported():
    base = extremal_kernel(1.0, 1.0, 1, lam=0.5, Lam=2.0)
    K = KernelSpec(1.0, 0.5, 2.0, lambda y: base(y) * np.where(y[..., 0] > 0, 1.0, 1.5))
    rep = validate_bounds(K, [[0.5], [-0.5]])
    assert not rep["passed"] and rep["asymmetric"]


@pytest.mark.parametrize("n", [1, 2])
def test_interpolated_kernel_within_bounds(n):
    K = interpolated_kernel(0.7, 0.5, 2.0, n)
    y = rng_for(0).uniform(-5, 5, size=(500, n))
    assert validate_bounds(K, y)["passed"]


def test_seminorm_closed_form():
    # for c |y|^-2 with a shift h the integral over |y| > 1/2 is 1/(1/2 - h) - 1/(1/2 + h)
    K = extremal_kernel(1.0, 1.0, 1)
    h = 0.1
    exact = (1 / (0.5 - h) - 1 / (0.5 + h)) / h
    assert smoothness_seminorm(K, 0.25, [h]) == pytest.approx(exact, rel=1e-7)
    assert smoothness_seminorm(K, 0.25, [h]) == pytest.approx(25 / 3, rel=1e-7)


def test_seminorm_jump_exceeds_smooth():
    def jump(y):
        r = np.linalg.norm(y, axis=-1)
        return (1.0 + (r < 1.0)) * r ** -2.0

    J = KernelSpec(1.0, 1.0, 2.0, jump, breakpoints=(1.0,))
    assert smoothness_seminorm(J, 0.25, [0.1, -0.05]) > smoothness_seminorm(extremal_kernel(1.0, 1.0, 1), 0.25,
                                                                              [0.1, -0.05])


def test_seminorm_rejects_large_shift():
    with pytest.raises(ValueError):
        smoothness_seminorm(extremal_kernel(1.0, 1.0, 1), 0.25, [0.3])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000), st.floats(0.2, 1.9))
def test_weights_nonnegative(seed, sigma):
    K = random_kernel(rng_for(seed), sigma, 0.5, 2.0, 1)
    t = build_weight_table(K, lat(1, 1 / 16), 1.0)
    assert np.all(t.weights >= 0) and t.near_origin_coeff >= 0 and np.all(t.tail_weights >= 0)


def test_second_moment_and_refinement():
    # the origin coefficient closes the moment exactly; without it the error is first order
    K = extremal_kernel(1.0, 1.0, 1)
    errs = []
    for h in (1 / 32, 1 / 64, 1 / 128):
        t = build_weight_table(K, lat(1, h), 1.0)
        assert t.second_moment() == pytest.approx(2.0, rel=1e-2)
        errs.append(abs(t.second_moment(include_origin=False) - 2.0))
    assert errs[1] <= errs[0] / 2 + 1e-15 and errs[2] <= errs[1] / 2 + 1e-15


def test_second_moment_2d():
    K = extremal_kernel(1.0, 1.0, 2)
    t = build_weight_table(K, lat(2, 1 / 16), 1.0)
    assert t.second_moment() == pytest.approx(2 * math.pi, rel=1e-2)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
def test_origin_coefficient_closed_form(sigma):
    h = 1 / 64
    t = build_weight_table(extremal_kernel(sigma, 1.0, 1), lat(1, h), 1.0)
    assert t.near_origin_coeff == pytest.approx(2 * (h / 2) ** (2 - sigma), rel=1e-12)


@pytest.mark.parametrize("n,sigma", [(1, 0.5), (1, 1.5), (2, 1.0)])
def test_tail_mass_closed_form(n, sigma):
    R = 1.0
    t = build_weight_table(extremal_kernel(sigma, 1.0, n), lat(n, 1 / 8), R)
    sphere = 2.0 if n == 1 else 2 * math.pi
    assert t.tail_coeff == pytest.approx(sphere * (2 - sigma) * R ** -sigma / sigma, rel=1e-9)


def test_tail_mass_matches_adaptive_quadrature():
    for n in (1, 2):
        K = interpolated_kernel(1.2, 0.5, 2.0, n, shape=lambda y: np.exp(-np.linalg.norm(y, axis=-1)), name="exp")
        t = build_weight_table(K, lat(n, 1 / 8), 1.0)
        assert t.tail_coeff == pytest.approx(tail_mass_reference(K, 1.0), rel=1e-3)


def test_cache_roundtrip(tmp_path):
    K = extremal_kernel(1.3, 1.0, 1)
    a = build_weight_table(K, lat(1, 1 / 16), 1.0, cache_dir=str(tmp_path))
    b = build_weight_table(K, lat(1, 1 / 16), 1.0, cache_dir=str(tmp_path))
    assert a.key == b.key and list(tmp_path.glob("*.npz"))
    assert np.array_equal(a.weights, b.weights) and a.near_origin_coeff == b.near_origin_coeff


def test_table_size_cap():
    with pytest.raises(MemoryError):
        build_weight_table(extremal_kernel(1.0, 1.0, 2), lat(2, 1 / 64), 1.0, max_offsets=100)
