import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlparabolic.geometry import (Box, CubeRegion, DyadicCube, ParabolicCube, Point, cz_decompose, dyadic_from_json,
                                  dyadic_root, dyadic_split, dyadic_to_json, elongation, elongation_breakpoints,
                                  expansion, parabolic_distance, union_measure)
from nlparabolic.families import random_dyadic_union, rng_for


def test_distance_coincident_is_zero():
    p = Point((0.3,), 0.2)
    assert parabolic_distance(p, p, 1.5) == 0.0


def test_distance_future_is_infinite():
    assert parabolic_distance(Point((0.0,), 1.0), Point((0.0,), 0.0), 1.0) == math.inf


def test_distance_hand_value():
    assert parabolic_distance(Point((0.0,), 0.0), Point((1.0,), 1.0), 1.0) == 2.0


@pytest.mark.parametrize("sigma", [0.0, 2.0, -1.0, float("nan")])
def test_sigma_range_rejected(sigma):
    with pytest.raises(ValueError):
        ParabolicCube(Point((0.0,), 0.0), 1.0, sigma, "Q")


def test_cube_time_intervals():
    o = Point((0.0,), 0.0)
    assert ParabolicCube(o, 1.0, 1.5, "Q").time_interval()[:2] == (-1.0, 0.0)
    assert ParabolicCube(o, 1.0, 1.5, "rQ-").time_interval()[:2] == (1.0, 2.0)
    assert ParabolicCube(o, 1.0, 1.5, "rQ+").time_interval()[:2] == (3.0, 4.0)
    lo, hi, _, _ = ParabolicCube(o, 0.5, 1.0, "K+").time_interval()
    assert (lo, hi) == (0.5, 2.5)
    assert ParabolicCube(o, 0.5, 1.0, "K+").half_width == 1.5


def test_elongation_m0_is_cube():
    k = ParabolicCube(Point((0.0,), 0.0), 0.5, 1.5, "K-")
    assert math.isclose(elongation(k, 0).measure, 1.0 * 0.5 ** 1.5)


def test_elongation_hand_value():
    k = DyadicCube(0, (0, 0), sigma=Fraction(1))
    assert elongation_breakpoints(1, Fraction(1))[-1] == 4
    assert elongation(k, 1).measure == 8


def test_elongation_strictly_increasing():
    k = ParabolicCube(Point((0.1,), 0.0), 0.3, 1.2, "rK")
    ms = [elongation(k, m).measure for m in range(6)]
    assert all(b > a for a, b in zip(ms, ms[1:]))


def test_expansion_m0_equals_elongation():
    k = ParabolicCube(Point((0.0, 0.0), 0.0), 0.4, 0.8, "K-")
    assert math.isclose(expansion(k, 0).measure, elongation(k, 0).measure)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(0.05, 1.0), st.floats(0.1, 1.9), st.integers(0, 5))
def test_elongation_inside_expansion(x, r, sigma, m):
    k = ParabolicCube(Point((x,), 0.0), r, sigma, "K-")
    assert expansion(k, m).contains_region(elongation(k, m))


def test_expansion_slab_is_single_box():
    k = DyadicCube(0, (0, 0), sigma=Fraction(1))
    for j in range(1, 4):
        diff = expansion(k, j).measure - expansion(k, j - 1).measure
        slab = (2 * 3 ** j) * 3 ** j * 1
        # the slab of the j-th stage minus its overlap with the previous stages (none: times are disjoint)
        assert diff == slab


def test_dyadic_child_counts():
    assert len(dyadic_split(dyadic_root(1))) == 4
    assert len(dyadic_split(dyadic_root(2, (3, 2)), n=2)) == 128


def test_dyadic_children_partition_exactly():
    root = dyadic_root(2, (1, 1))
    kids = dyadic_split(root)
    assert sum(k.measure for k in kids) == root.measure
    grand = [g for k in kids[:3] for g in dyadic_split(k)]
    assert sum(g.measure for g in grand) == sum(k.measure for k in kids[:3])


def test_cz_full_root_selects_root():
    root = dyadic_root(1)
    sel, region = cz_decompose([root], Fraction(1, 3), 2)
    assert sel == [root]
    assert region.measure >= root.measure


def test_cz_empty():
    sel, region = cz_decompose([], Fraction(1, 2), 2, n=1)
    assert sel == [] and region.measure == 0


def test_cz_random_unions_inequality():
    for k in range(50):
        A = random_dyadic_union(rng_for(5, k), 1, 3)
        _, region = cz_decompose(A, Fraction(1, 2), 2)
        assert region.measure >= Fraction(2, 3) / Fraction(1, 2) * union_measure(A)


def test_cz_invalid_delta():
    with pytest.raises(ValueError):
        cz_decompose([dyadic_root(1)], Fraction(3, 2), 1)


def test_dyadic_json_roundtrip():
    A = random_dyadic_union(rng_for(1, 2), 2, 2)
    back = dyadic_from_json(dyadic_to_json(A))
    assert [(c.depth, c.index) for c in back] == [(c.depth, c.index) for c in A]


def test_box_union_disjoint_measure():
    a = Box((Fraction(0), Fraction(0)), (Fraction(2), Fraction(1)))
    b = Box((Fraction(1), Fraction(0)), (Fraction(3), Fraction(1)))
    assert CubeRegion.union([a, b]).measure == 3


def test_cube_membership_mask():
    c = ParabolicCube(Point((0.0,), 1.0), 0.5, 1.0, "Q")
    x = np.array([[0.0], [0.49], [0.5]])
    assert c.contains_space(x).tolist() == [True, True, False]
    assert c.contains_time(np.array([0.5, 0.75, 1.0])).tolist() == [False, True, True]
