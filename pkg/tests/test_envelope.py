import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlparabolic.envelope import (abp_diagnostics, concave_envelope, concave_hull_1d, concave_hull_2d,
                                  lipschitz_estimate, normal_map_bruteforce_1d, normal_map_measure, ring_radii,
                                  sup_convolution, tso_ratio, PreconditionError)
from nlparabolic.families import lipschitz_sample, rng_for
from nlparabolic.geometry import ParabolicCube, Point
from nlparabolic.gridfn import GridFunction, LatticeSpec, sample


def brute_hull_1d(x, y, xq):
    """max over chords (i, j) with x_i <= q <= x_j of the chord value."""
    out = np.full(len(xq), -np.inf)
    for i, j in itertools.product(range(len(x)), repeat=2):
        if x[i] <= x[j]:
            sel = (xq >= x[i]) & (xq <= x[j])
            w = 0.0 if x[j] == x[i] else 1.0
            lam = w * (xq[sel] - x[i]) / (x[j] - x[i] if x[j] != x[i] else 1.0)
            out[sel] = np.maximum(out[sel], (1 - lam) * y[i] + lam * y[j])
    return out


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=12))
def test_hull_1d_matches_chord_oracle(vals):
    x = np.linspace(-1, 1, len(vals))
    y = np.array(vals)
    assert np.allclose(concave_hull_1d(x, y, x), brute_hull_1d(x, y, x), atol=1e-12)


def test_hull_2d_reproduces_concave_data():
    g = np.linspace(-1, 1, 9)
    P = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    v = 2 - np.sum(P ** 2, axis=1)
    assert np.allclose(concave_hull_2d(P, v, P), v, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_hull_2d_majorant_and_midpoint_concave(seed):
    rng = rng_for(seed)
    g = np.linspace(-1, 1, 7)
    P = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    v = rng.uniform(-1, 1, len(P))
    H = concave_hull_2d(P, v, P)
    assert np.all(H >= v - 1e-12)
    a, b = rng.uniform(-1, 1, (2, 20, 2))
    ha, hb, hm = (concave_hull_2d(P, v, q) for q in (a, b, (a + b) / 2))
    assert np.all(hm >= (ha + hb) / 2 - 1e-12)


LAT = LatticeSpec(1, 1 / 32, 1 / 32, 2.0, 0.0, 1.0, 1.0)
DOM = ParabolicCube(Point((0.0,), 1.0), 1.0, 1.0, "Q")


def bump_sample(seed):
    rng = rng_for(seed, 1)
    c, a, w = rng.uniform(-0.5, 0.5, 3), rng.uniform(0, 1, 3), rng.uniform(0.05, 0.3, 3)
    ramp = rng.uniform(0.5, 2.0, 3)

    def f(x, t):
        r = np.abs(x[..., 0][..., None] - c)
        return np.sum(a * np.minimum(ramp * t, 1.0) * np.maximum(1 - r / w, 0.0), axis=-1) - 0.05

    return sample(f, LAT)


def test_nonpositive_data_gives_zero_envelope():
    u = sample(lambda x, t: -1.0 - x[..., 0] ** 2, LAT)
    env = concave_envelope(u, DOM)
    assert np.all(env.gamma.values == 0) and not env.contact_mask.any()
    rep = abp_diagnostics(u, np.ones(LAT.shape), env, 1.0, ring_points=0)
    assert rep.sup_u_plus == 0 and rep.tso_ratio == 0 and "empty contact set" in rep.flags


def test_final_time_tent_closed_form():
    # hull of (1 - |x|/0.3)+ with zero boundary at |x| = 0.6 is 1 - |x|/0.6
    u = sample(lambda x, t: np.where(t >= 1.0, np.maximum(1 - np.abs(x[..., 0]) / 0.3, 0.0), 0.0), LAT)
    dom = ParabolicCube(Point((0.0,), 1.0), 0.6, 1.0, "Q")
    env = concave_envelope(u, dom)
    x = LAT.x1d
    inside = np.abs(x) < 0.6
    assert np.allclose(env.gamma.values[-1][inside], 1 - np.abs(x[inside]) / 0.6, atol=1e-12)
    assert np.all(env.gamma.values[:-1] == 0)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_envelope_structure(seed):
    u = bump_sample(seed)
    env = concave_envelope(u, DOM)
    G, dm = env.gamma.values, env.domain_mask
    assert np.all(G[dm] >= np.maximum(u.values[dm], 0) - 1e-12)
    tidx = np.nonzero(DOM.contains_time(LAT.times))[0]
    assert np.all(np.diff(G[tidx], axis=0) >= -1e-12)
    sm = DOM.contains_space(LAT.space_nodes())
    for m in tidx:
        g = G[m][sm]
        assert np.all(g[:-2] + g[2:] - 2 * g[1:-1] <= 1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_envelope_minimality(seed):
    u = bump_sample(seed)
    env = concave_envelope(u, DOM)
    x = LAT.x1d
    up = np.maximum(u.values, 0)
    for profile in (1 - np.abs(x), 1 - x ** 2):
        prof = np.where(np.abs(x) < 1, np.maximum(profile, 0), 0.0)
        need = np.max(np.where(prof > 0, up / np.where(prof > 0, prof, 1), 0), axis=1)
        a = np.maximum.accumulate(need)
        v = a[:, None] * prof[None]
        assert np.all(env.gamma.values[env.domain_mask] <= v[env.domain_mask] + 1e-12)


def test_peak_of_concave_monotone_sample_is_contact():
    u = sample(lambda x, t: t * (0.5 - x[..., 0] ** 2), LAT)
    env = concave_envelope(u, DOM)
    k = np.unravel_index(np.argmax(np.where(env.domain_mask, u.values, -np.inf)), LAT.shape)
    assert env.contact_mask[k]


def test_tent_normal_map_closed_form():
    lat = LatticeSpec(1, 1 / 128, 1 / 128, 2.0, 0.0, 1.0, 1.0)
    u = sample(lambda x, t: t * (1 - x[..., 0] ** 2), lat)
    env = concave_envelope(u, DOM)
    assert normal_map_measure(env) == pytest.approx(4 / 3, rel=2e-2)


def test_normal_map_matches_bruteforce():
    lat = LatticeSpec(1, 1 / 32, 1 / 32, 2.0, 0.0, 1.0, 1.0)
    u = sample(lambda x, t: t * (1 - x[..., 0] ** 2), lat)
    env = concave_envelope(u, DOM)
    assert normal_map_bruteforce_1d(env) == pytest.approx(normal_map_measure(env), rel=5e-2)


def test_normal_map_zero_when_static_and_additive():
    u = sample(lambda x, t: 0.5 - x[..., 0] ** 2 + 0 * t, LAT)
    env = concave_envelope(u, ParabolicCube(Point((0.0,), 1.0), 1.0, 1.0, "Q"))
    # the first slice of the cube carries the jump from zero; afterwards the envelope is static
    later = np.broadcast_to((LAT.times > LAT.h_t + 1e-12)[:, None], LAT.shape)
    assert normal_map_measure(env, later) == 0
    v = bump_sample(3)
    env = concave_envelope(v, DOM)
    left = np.broadcast_to(LAT.x1d[None] < 0, LAT.shape)
    total = normal_map_measure(env)
    assert normal_map_measure(env, left) + normal_map_measure(env, ~left) == pytest.approx(total, rel=1e-12)


def test_precondition_lists_nodes():
    u = sample(lambda x, t: np.ones(x.shape[:-1]), LAT)
    with pytest.raises(PreconditionError) as info:
        concave_envelope(u, DOM, ParabolicCube(Point((0.0,), 1.0), 0.5, 1.0, "Q"))
    assert info.value.nodes


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_contact_sign_and_gamma_t_propagation(seed):
    u = bump_sample(seed)
    env = concave_envelope(u, DOM)
    rep = abp_diagnostics(u, np.ones(LAT.shape), env, 1.0, ring_points=1)
    assert rep.contact_max_mu <= 1e-9
    if env.contact_mask.any():
        M = float(np.max(env.dt_gamma[env.contact_mask]))
        assert float(np.max(env.dt_gamma)) <= 2 * M * 1.05 + 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_lipschitz_transfer(seed):
    f, L = lipschitz_sample(rng_for(seed, 2), 1)

    def g(x, t):
        r = np.abs(x[..., 0])
        return np.minimum(np.minimum(np.abs(f(x, t)), 0.8 - r), t)

    u = sample(g, LAT)
    env = concave_envelope(u, DOM)
    assert lipschitz_estimate(env.gamma) <= 2 * lipschitz_estimate(u) * 1.05


def test_sup_convolution_zero_and_order():
    u = GridFunction(LAT, np.zeros(LAT.shape))
    assert np.allclose(sup_convolution(u, 0.1).values, 0.1)
    v = bump_sample(5)
    a, b = sup_convolution(v, 0.05), sup_convolution(v, 0.1)
    assert np.all(a.values >= v.values) and np.all(b.values >= a.values)


def test_sup_convolution_converges_on_lipschitz_sample():
    f, L = lipschitz_sample(rng_for(11), 1)
    u = sample(f, LAT)
    errs = [float(np.max(sup_convolution(u, e).values - u.values)) for e in (0.2, 0.1, 0.05)]
    assert errs[0] >= errs[1] >= errs[2]
    for e, err in zip((0.2, 0.1, 0.05), errs):
        assert err <= e + L * e


def test_ring_radii_and_tso():
    r = ring_radii(0.5, 1.0, 3)
    assert np.allclose(r, 0.5 * 2.0 ** (-1 - np.arange(5)))
    assert tso_ratio(2.0, 4.0, 1) == 1.0 and tso_ratio(1.0, 0.0, 1) == float("inf")
