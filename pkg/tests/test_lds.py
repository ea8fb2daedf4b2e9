import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.stats import qmc

from oracles import star_discrepancy_2d
from tcrisk.errors import DomainError
from tcrisk.lds import (
    RandomShift,
    SobolGenerator,
    apply_shift,
    direction_integers,
    make_point_source,
    sobol_next,
)


def test_first_point_is_half_everywhere():
    gen = SobolGenerator(7)
    assert np.all(sobol_next(gen) == 0.5)
    assert gen.index == 2


def test_first_dimension_indices_one_to_four():
    gen = SobolGenerator(1)
    assert gen.take(4).ravel().tolist() == [0.5, 0.75, 0.25, 0.375]


@pytest.mark.parametrize("dim", [1, 2, 10, 64, 300])
def test_matches_reference_unscrambled_sobol(dim):
    ours = SobolGenerator(dim).take(1023)
    ref = qmc.Sobol(dim, scramble=False).random(1024)[1:]
    np.testing.assert_array_equal(ours, ref)


def test_random_access_matches_sequential():
    gen = SobolGenerator(5)
    seq = gen.take(500)
    idx = np.array([1, 17, 256, 500], dtype=np.uint64)
    np.testing.assert_array_equal(SobolGenerator(5).points_at(idx), seq[idx.astype(int) - 1])


def test_dimension_limit():
    direction_integers(1111)
    with pytest.raises(DomainError):
        SobolGenerator(1112)


@pytest.mark.parametrize("k", [4, 7, 10])
def test_dyadic_intervals_exact_from_index_zero(k):
    n = 2**k
    gen = SobolGenerator(8, start_index=0)
    pts = gen.take(n)
    for d in range(8):
        for level in range(1, k + 1):
            counts = np.bincount((pts[:, d] * 2**level).astype(int), minlength=2**level)
            assert np.all(counts == n // 2**level)


def test_points_in_unit_interval():
    pts = SobolGenerator(20).take(4096)
    assert pts.min() >= 0.0 and pts.max() < 1.0


def test_star_discrepancy_beats_pseudorandom():
    n = 2**8
    sob = SobolGenerator(2).take(n)
    prn = np.random.default_rng(12345).random((n, 2))
    assert star_discrepancy_2d(sob) < star_discrepancy_2d(prn)


def test_shift_examples():
    np.testing.assert_array_equal(apply_shift([0.25, 0.5], [0.0, 0.0]), [0.25, 0.5])
    np.testing.assert_array_equal(apply_shift([0.75, 0.5], [0.5, 0.75]), [0.25, 0.25])


def test_shift_dimension_mismatch():
    with pytest.raises(DomainError):
        apply_shift(np.zeros((3, 2)), np.zeros(3))


def test_shift_validation_and_reproducibility():
    with pytest.raises(DomainError):
        RandomShift(np.array([0.2, 1.0]))
    a, b = RandomShift.draw(4, 9), RandomShift.draw(4, 9)
    np.testing.assert_array_equal(a.shift, b.shift)


@settings(max_examples=200, deadline=None)
@given(
    u=st.lists(st.floats(0, 1, exclude_max=True), min_size=3, max_size=3),
    w=st.lists(st.floats(0, 1, exclude_max=True), min_size=3, max_size=3),
)
def test_shift_stays_in_cube_and_inverts(u, w):
    out = apply_shift(np.array(u), np.array(w))
    assert np.all((out >= 0) & (out < 1))
    back = apply_shift(out, (1.0 - np.array(w)) % 1.0)
    d = np.abs(back - np.array(u))
    assert np.all(np.minimum(d, 1 - d) < 1e-12)


def test_shifted_net_coordinate_means():
    pts = SobolGenerator(3, start_index=0).take(2**10)
    shifted = apply_shift(pts, np.array([0.3141, 0.2718, 0.9]))
    sigma = np.sqrt(1 / 12 / 2**10)
    assert np.all(np.abs(shifted.mean(axis=0) - 0.5) < 3 * sigma)


def test_shift_uniformity_of_a_fixed_point():
    rng = np.random.default_rng(4)
    u = SobolGenerator(3).take(5)[-1]
    out = apply_shift(np.tile(u, (10_000, 1)), rng.random((10_000, 3)))
    for d in range(3):
        counts = np.bincount((out[:, d] * 10).astype(int), minlength=10)
        assert stats.chisquare(counts).pvalue > 0.001


def test_shifted_net_nondyadic_intervals():
    n = 2**10
    pts = SobolGenerator(2, start_index=0).take(n)
    shifted = apply_shift(pts, np.array([0.123456, 0.654321]))
    rng = np.random.default_rng(8)
    for _ in range(200):
        a, b = np.sort(rng.random(2))
        for d in range(2):
            count = np.sum((shifted[:, d] >= a) & (shifted[:, d] < b))
            assert abs(count - n * (b - a)) <= 1 + 1e-9


def test_pseudorandom_source_deterministic():
    a = make_point_source("pseudorandom", 3, 7).draw(100)
    b = make_point_source("pseudorandom", 3, 7).draw(100)
    np.testing.assert_array_equal(a, b)


def test_sobol_sources_differ_across_seeds():
    a = make_point_source("sobol_shifted", 3, 7)
    b = make_point_source("sobol_shifted", 3, 8)
    assert not np.array_equal(a.shift.shift, b.shift.shift)


def test_sobol_source_ks_band():
    pts = make_point_source("sobol_shifted", 2, 3).draw(2**12)
    for d in range(2):
        assert stats.kstest(pts[:, d], "uniform").statistic < 1.63 / np.sqrt(2**12)


def test_sources_never_repeat_and_keep_dimension():
    src = make_point_source("sobol_shifted", 4, 1)
    a, b = src.draw(64), src.draw(64)
    assert a.shape == b.shape == (64, 4)
    assert not np.any(np.all(a[:, None, :] == b[None, :, :], axis=2))


def test_streams_from_different_seeds_ks():
    a = make_point_source("pseudorandom", 1, 1).draw(5000).ravel()
    b = make_point_source("pseudorandom", 1, 2).draw(5000).ravel()
    assert stats.ks_2samp(a, b).pvalue > 0.01


def test_unknown_kind_and_bad_dimension():
    with pytest.raises(ValueError):
        make_point_source("halton", 2, 0)
    with pytest.raises(DomainError):
        make_point_source("pseudorandom", 0, 0)
