import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlparabolic.geometry import ParabolicCube, Point
from nlparabolic.gridfn import (GridFunction, LatticeSpec, extremum, level_set_measure, oscillation, read_binary,
                                read_csv, sample, write_binary, write_csv)
from nlparabolic.families import random_grid_function, rng_for

LAT = LatticeSpec(1, 1 / 8, 1 / 4, 2.0, 0.0, 1.0, 1.0)
REGION = ParabolicCube(Point((0.0,), 1.0), 1.0, 1.0, "Q")


def test_zero_function_samples_to_zeros():
    u = sample(lambda x, t: np.zeros(x.shape[:-1]), LAT)
    assert np.all(u.values == 0.0)


def test_time_function_is_exact():
    u = sample(lambda x, t: np.full(x.shape[:-1], t), LAT)
    for m, t in enumerate(LAT.times):
        assert np.all(u.values[m] == t)


def test_lattice_rejects_bad_extent():
    with pytest.raises(ValueError):
        LatticeSpec(1, 0.3, 0.25)
    with pytest.raises(ValueError):
        LatticeSpec(1, 0.25, 0.25, X=1.0)
    with pytest.raises(ValueError):
        LatticeSpec(1, 0.25, 0.25, max_nodes=10)


def test_non_finite_values_rejected_with_location():
    with pytest.raises(ValueError, match="x="):
        sample(lambda x, t: np.where(x[..., 0] > 1.5, np.nan, 0.0), LAT)


def test_oscillation_of_identity():
    u = sample(lambda x, t: x[..., 0], LAT)
    vals = LAT.x1d[np.abs(LAT.x1d) < 1.0]
    assert oscillation(u, REGION) == pytest.approx(vals.max() - vals.min())


def test_region_without_nodes_raises():
    u = sample(lambda x, t: x[..., 0], LAT)
    tiny = ParabolicCube(Point((0.01,), 0.9), 0.01, 1.0, "Q")
    with pytest.raises(ValueError):
        oscillation(u, tiny)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1, 1))
def test_level_sets_partition_region(seed, s):
    u = random_grid_function(rng_for(seed), LAT)
    total = np.count_nonzero(u.node_mask(REGION)) * LAT.cell_volume
    above = level_set_measure(u, s, REGION, "above")
    below = level_set_measure(u, s, REGION, "at-most")
    assert above + below == pytest.approx(total)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_extremum_duality(seed):
    u = random_grid_function(rng_for(seed), LAT)
    neg = GridFunction(LAT, -u.values)
    sup, where = extremum(u, REGION, "sup")
    inf, where_neg = extremum(neg, REGION, "inf")
    assert sup == -inf and where == where_neg
    assert u.at_node(where[0], where[1]) == sup


def test_multilinear_evaluation_and_exterior():
    u = sample(lambda x, t: 2.0 * x[..., 0] + 1.0, LAT)
    pts = np.array([[0.03], [-1.97], [3.0]])
    assert np.allclose(u.evaluate_slice(0, pts), [1.06, -2.94, 7.0])


def test_csv_roundtrip(tmp_path):
    lat = LatticeSpec(2, 1 / 2, 1 / 2, 2.0, 0.0, 1.0, 1.0)
    u = random_grid_function(rng_for(3), lat)
    write_csv(u, tmp_path / "u.csv")
    assert np.array_equal(read_csv(tmp_path / "u.csv", lat).values, u.values)


def test_binary_roundtrip(tmp_path):
    u = random_grid_function(rng_for(4), LAT)
    write_binary(u, tmp_path / "u.bin")
    back = read_binary(tmp_path / "u.bin")
    assert back.lattice == LAT
    assert np.array_equal(back.values, u.values)


def test_binary_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"x" * 64)
    with pytest.raises(ValueError):
        read_binary(p)
