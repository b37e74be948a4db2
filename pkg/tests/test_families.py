import numpy as np
from hypothesis import given, settings, strategies as st

from nlparabolic import families as fam
from nlparabolic.gridfn import LatticeSpec
from nlparabolic.kernels import validate_bounds

X = np.linspace(-6, 6, 241)[:, None]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ordered_pair_is_ordered(seed):
    lo, hi = fam.ordered_pair(fam.rng_for(seed), 1)
    assert np.all(hi["initial"](X) >= lo["initial"](X))
    for t in (0.0, 0.5):
        assert np.all(hi["exterior"](X, t) >= lo["exterior"](X, t))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 1.9))
def test_random_kernel_in_class(seed, sigma):
    K = fam.random_kernel(fam.rng_for(seed), sigma, 0.5, 2.0, 1)
    assert validate_bounds(K, np.linspace(0.01, 20, 300))["passed"]


def test_generators_are_reproducible():
    lat = LatticeSpec(1, 1 / 8, 1 / 4)
    a = fam.random_grid_function(fam.rng_for(1, 2), lat)
    b = fam.random_grid_function(fam.rng_for(1, 2), lat)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.exterior(X, 0.0), b.exterior(X, 0.0))


def test_constructed_subsolution_support():
    # positive only inside B_(1/2) x (T - (1/2)^sigma, T]
    sigma, T = 1.5, 1.0
    for k in range(8):
        u = fam.constructed_subsolution(k, sigma, T)
        for t in np.linspace(0, 1, 11):
            v = u(X, t)
            assert np.all(v[np.abs(X[:, 0]) >= 0.5] <= 0)
            if t <= T - 0.5 ** sigma:
                assert np.all(v <= 0)
        assert np.max(u(X, T)) > 0


def test_supersolution_and_positive_families():
    for m in fam.supersolution_family(0, 5):
        assert np.all(m["initial"](X) >= 0) and np.all(m["forcing"](X, 0.3) >= 0)
    for m in fam.positive_family(0, 5):
        assert np.all(m["initial"](X) >= 1) and np.all(m["exterior"](X, 0.0) == 1)


def test_lipschitz_sample_bound():
    f, L = fam.lipschitz_sample(fam.rng_for(4), 1)
    rng = fam.rng_for(5)
    p, q = rng.uniform(-2, 2, (2, 200, 2))
    num = np.abs(f(p[:, :1], p[:, 1]) - f(q[:, :1], q[:, 1]))
    den = np.linalg.norm(p - q, axis=1)
    assert np.all(num <= L * den + 1e-12)


def test_checkerboard_values():
    g, ext = fam.checkerboard(0.25)
    assert g(np.array([[0.1], [0.3], [-0.1]])).tolist() == [1.0, -1.0, -1.0]
