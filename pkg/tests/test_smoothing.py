import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lipflow.flows import circle_rotation
from lipflow.function_space import Func01, SeqFunc, is_in_L, restrict, translate
from lipflow.harness import derivative_orders, random_lipschitz, random_seqfunc
from lipflow.hilbert import CoordEmbedding
from lipflow.orbit import OrbitConfig, orbit_embed
from lipflow.smoothing import (PairIndex, QuadConfig, SmoothingError,
                               UniversalPoint, certificate_defect,
                               derivative_identity_defect, index_of,
                               linearity_defect, pair_of, pairs, r_of,
                               separation_witness, smooth,
                               smoothing_equivariance_defect, universal_embed,
                               window_integrals)


def seq(*fns, window=(0.0, 3.0), h=0.01):
    return SeqFunc(tuple(Func01.sample(fn, window, h) for fn in fns))


def exact_integral(values, h, t0_index, r):
    """Integral of the linear interpolant over [t, t + r] in rational arithmetic."""
    v = [Fraction(x) for x in values]
    h, r = Fraction(h), Fraction(r)
    t = t0_index * h
    total = Fraction(0)
    k = t0_index
    end = t + r
    while k * h < end:
        lo, hi = k * h, min((k + 1) * h, end)
        slope = (v[k + 1] - v[k]) / h
        at = lambda s: v[k] + slope * (s - k * h)  # noqa: E731
        total += (at(lo) + at(hi)) / 2 * (hi - lo)
        k += 1
    return total


# -- enumeration -----------------------------------------------------------------

def test_r_of():
    assert r_of(1) == 0.5 and r_of(3) == 0.25
    assert all(0 < r_of(j) <= 1 for j in range(1, 500))


def test_listing_order():
    got = [tuple(pair_of(k)) for k in range(1, 7)]
    assert got == [(1, 1), (1, 2), (2, 2), (1, 3), (2, 3), (3, 3)]
    assert index_of(PairIndex(1, 1)) == 1 and index_of(PairIndex(2, 3)) == 5


def test_pair_index_validation():
    with pytest.raises(SmoothingError):
        PairIndex(3, 2)
    with pytest.raises(SmoothingError):
        PairIndex(0, 1)
    with pytest.raises(SmoothingError):
        pair_of(0)


def test_round_trip_pairs():
    for j in range(1, 2001):
        for i in (1, j // 2 + 1, j):
            p = PairIndex(i, j)
            assert pair_of(index_of(p)) == p


def test_round_trip_indices():
    ks = range(1, 1_000_001, 997)
    assert all(index_of(pair_of(k)) == k for k in ks)


def test_pairs_sorted_like_listing():
    ps = pairs(21)
    assert ps == sorted(ps) and max(p.j for p in ps) == 6


# -- smooth --------------------------------------------------------------------

@pytest.mark.parametrize("c", [0.0, 0.3, 0.5, 1.0])
@pytest.mark.parametrize("j", [1, 2, 5])
def test_constant_integrand(c, j):
    F = smooth(seq(lambda t: np.full_like(t, c)), PairIndex(1, j))
    assert np.allclose(F.values, c * r_of(j), rtol=0, atol=4e-16)


def test_ramp_closed_form():
    f = seq(lambda t: np.clip(t, 0, 1), window=(0.0, 1.0))
    F = smooth(f, PairIndex(1, 1))
    assert F.values[0] == pytest.approx(0.125, abs=1e-15)
    assert F.window[1] == pytest.approx(0.5)


def test_exact_against_rational_oracle(rng):
    f = random_seqfunc(rng, (0.0, 1.0), 0.02, 1)
    V = f[1].values
    for j in (1, 2, 3, 6):
        F = smooth(f, PairIndex(1, j))
        for k in range(0, len(F), 7):
            assert abs(F.values[k] - float(exact_integral(V, 0.02, k, r_of(j)))) <= 2e-16


def test_margin_error_names_requirement():
    f = seq(lambda t: 0 * t + 0.5, window=(0.0, 0.4))
    with pytest.raises(SmoothingError, match="r_j=0.5"):
        smooth(f, PairIndex(1, 1))


def test_depth_error():
    with pytest.raises(SmoothingError):
        smooth(seq(lambda t: 0 * t), PairIndex(2, 2))


@given(st.integers(0, 2**32 - 1), st.sampled_from([0.01, 0.02, 0.025, 0.05]))
def test_certificate_is_exact(seed, h):
    f = random_seqfunc(np.random.default_rng(seed), (0.0, 2.0), h, 6)
    for p in pairs(21):
        F = smooth(f, p)
        assert is_in_L(F, 0.0)
        assert 0.0 <= F.values.min() and F.values.max() <= r_of(p.j)
        assert certificate_defect(F, r_of(p.j)) <= 0.0


def test_uniform_quadrature_converges_to_exact(rng):
    f = random_seqfunc(rng, (0.0, 2.0), 0.01, 1)
    p = PairIndex(1, 2)
    exact = smooth(f, p).values
    errs = [np.max(np.abs(smooth(f, p, QuadConfig(m)).values - exact)) for m in (8, 64, 512)]
    assert errs[0] > errs[1] > errs[2]


def test_quad_config_validation():
    with pytest.raises(SmoothingError):
        QuadConfig(0)
    assert QuadConfig().exact and not QuadConfig(4).exact


# -- universal point -------------------------------------------------------------

def test_first_three_pairs():
    U = universal_embed(seq(*[lambda t: 0.5 + 0 * t] * 2), 3)
    assert [tuple(p) for p, _ in U.meta] == [(1, 1), (1, 2), (2, 2)]


def test_all_constant_input():
    cs = [0.1, 0.4, 0.9, 0.0, 1.0, 0.6]
    U = universal_embed(seq(*[(lambda c: lambda t: c + 0 * t)(c) for c in cs]), 21)
    for e, (p, r) in zip(U.entries, U.meta):
        assert np.allclose(e.values, cs[p.i - 1] * r, rtol=0, atol=4e-16)


def test_entries_certified_and_share_grid(rng):
    U = universal_embed(random_seqfunc(rng, (0.0, 3.0), 0.01, 6), 21)
    assert U.depth == 21 and U.certify(0.0) == []
    assert all(e.same_grid(U.entries[0]) for e in U.entries)


def test_entries_independent_of_schedule(rng):
    f = random_seqfunc(rng, (0.0, 3.0), 0.01, 6)
    U = universal_embed(f, 21)
    for e, (p, _) in zip(U.entries, U.meta):
        alone = restrict(smooth(f, p), e.window)
        assert np.array_equal(alone.values, e.values)


def test_universal_embed_needs_components():
    with pytest.raises(SmoothingError):
        universal_embed(seq(lambda t: 0 * t), 3)


def test_manifest_round_trip(tmp_path, rng):
    U = universal_embed(random_seqfunc(rng, (0.0, 2.0), 0.01, 3), 6)
    path = U.write(tmp_path)
    V = UniversalPoint.read(path)
    assert V.meta == U.meta
    assert all(np.array_equal(a.values, b.values) for a, b in zip(U.entries, V.entries))


# -- algebraic properties --------------------------------------------------------

@pytest.mark.parametrize("r", [-0.5, -0.1, 0.1, 0.5, 1.0])
def test_equivariance_grid_aligned(r, rng):
    f = random_seqfunc(rng, (-3.0, 3.0), 0.01, 6)
    for p in pairs(21):
        assert smoothing_equivariance_defect(f, r, p) <= 1e-12


def test_equivariance_zero_shift(rng):
    f = random_seqfunc(rng, (0.0, 2.0), 0.01, 1)
    assert smoothing_equivariance_defect(f, 0.0, PairIndex(1, 1)) == 0.0


def test_equivariance_non_aligned(rng):
    h = 0.01
    f = random_seqfunc(rng, (-3.0, 3.0), h, 2)
    for r in (0.0137, -0.2551):
        for p in pairs(3):
            assert smoothing_equivariance_defect(f, r, p) <= 2 * h


@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_linearity(seed, alpha):
    rng = np.random.default_rng(seed)
    f, g = (random_seqfunc(rng, (0.0, 2.0), 0.02, 3) for _ in range(2))
    for p in pairs(6):
        assert linearity_defect(f, g, alpha, p) <= 1e-12


@given(st.integers(0, 2**32 - 1))
def test_monotonicity(seed):
    rng = np.random.default_rng(seed)
    g = random_seqfunc(rng, (0.0, 2.0), 0.02, 2)
    bump = rng.random(g.as_array().shape) * 0.3
    f = SeqFunc.from_array(g.window, g.step, np.minimum(1.0, g.as_array() + bump))
    for p in pairs(3):
        assert np.all(smooth(f, p).values >= smooth(g, p).values)


# -- derivative identity ---------------------------------------------------------

def test_derivative_identity_constant():
    assert derivative_identity_defect(seq(lambda t: 0.7 + 0 * t), PairIndex(1, 2)) <= 1e-13


def test_derivative_identity_second_order():
    orders = derivative_orders([1e-2, 5e-3, 2.5e-3], PairIndex(1, 1))
    assert all(1.8 <= q <= 2.2 for q in orders)


def test_derivative_identity_piecewise_linear(rng):
    # kinks of a 1-Lipschitz interpolant: f(t + r) - f(t) changes slope by at
    # most 4, so the central difference misses it by at most 4 * h / 4
    h = 0.01
    f = SeqFunc((random_lipschitz(rng, (0.0, 3.0), h, slope=1.0),))
    for j in (1, 2, 4):
        assert derivative_identity_defect(f, PairIndex(1, j)) <= h


# -- separation witness ----------------------------------------------------------

def test_witness_absent_for_equal_inputs(rng):
    f = random_seqfunc(rng, (0.0, 2.0), 0.01, 2)
    assert separation_witness(f, f) is None


def test_witness_constant_gap():
    f = seq(lambda t: 0.6 + 0 * t)
    g = seq(lambda t: 0.4 + 0 * t)
    w = separation_witness(f, g)
    assert tuple(w.pair) == (1, 2)
    assert w.gap == pytest.approx(0.2 / 3, abs=1e-15)
    # swapping the roles finds the same interval with the opposite sign
    v = separation_witness(g, f)
    assert v.sign == -1 and v.gap == pytest.approx(w.gap, abs=1e-15)


def test_witness_isolated_node_difference():
    f = seq(lambda t: 0.5 + 0 * t)
    vals = f.as_array().copy()
    vals[0, 100] = 0.6
    g = SeqFunc.from_array(f.window, f.step, vals)
    assert separation_witness(f, g) is None


def test_witness_on_short_run_uses_small_window():
    h = 0.01
    base = np.full((1, 301), 0.5)
    bumped = base.copy()
    bumped[0, 100:106] = 0.7
    f = SeqFunc.from_array((0.0, 3.0), h, bumped)
    g = SeqFunc.from_array((0.0, 3.0), h, base)
    w = separation_witness(f, g)
    a, b = w.interval
    assert a < w.t < w.t + w.pair.r < b and w.gap > 0
    assert r_of(w.pair.j - 1) >= b - a - 2 * h or w.pair.j - 1 == w.pair.i


def test_witness_on_circle_orbits():
    sys = circle_rotation(math.sqrt(2.0) - 1.0)
    psi = CoordEmbedding(sys.domain)
    cfg = OrbitConfig(4.0, 0.01)
    F = orbit_embed(sys, psi, [0.0], cfg)
    G = orbit_embed(sys, psi, [0.3], cfg)
    w = separation_witness(F, G)
    assert w is not None and w.gap > 0


def test_window_integrals_shift_is_bit_identical(rng):
    V = random_seqfunc(rng, (0.0, 4.0), 0.01, 2).as_array()
    a = window_integrals(V, 0.01, 0.25)
    b = window_integrals(V[:, 30:], 0.01, 0.25)
    assert np.array_equal(a[:, 30:], b)


def test_translate_then_smooth_matches_manual(rng):
    f = random_seqfunc(rng, (0.0, 2.0), 0.01, 1)
    p = PairIndex(1, 1)
    lhs = smooth(f.map(lambda c: translate(c, 0.2)), p)
    assert np.array_equal(lhs.values, smooth(f, p).values[20:])


def test_witness_depth_limit_skips_short_runs():
    h = 0.01
    g = np.full((2, 401), 0.5)
    f = g.copy()
    f[0, 0:8] = 0.6      # short run at the window edge: needs a large j
    f[0, 200:300] = 0.3  # long run of the opposite sign: j = 2 suffices
    F = SeqFunc.from_array((0.0, 4.0), h, f)
    G = SeqFunc.from_array((0.0, 4.0), h, g)
    free = separation_witness(F, G)
    assert free.sign == 1 and index_of(free.pair) > 21
    limited = separation_witness(F, G, depth_K=21)
    assert limited.sign == -1 and tuple(limited.pair) == (1, 2) and limited.gap > 0
    assert separation_witness(F, G, depth_K=1) is None
