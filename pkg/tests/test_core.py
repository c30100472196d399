import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from sofa.core import (CHUNK, Dataset, abandon_scan, accumulate, chunk_sums, euclidean_distance,
                       squared_distances, z_normalize, z_normalize_rows)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False, width=32)


def test_z_normalize_matches_scipy_zscore(rng):
    x = rng.normal(5, 3, size=200)
    z, ns = z_normalize(x)
    np.testing.assert_allclose(z, stats.zscore(x), rtol=1e-12, atol=1e-12)
    assert ns.mu == pytest.approx(x.mean())
    assert ns.sigma == pytest.approx(x.std())
    assert not ns.degenerate


def test_z_normalize_constant_series_maps_to_zeros():
    z, ns = z_normalize(np.full(16, 3.5))
    assert np.all(z == 0)
    assert ns.degenerate and ns.sigma == 0.0


def test_z_normalize_rejects_short_or_2d():
    with pytest.raises(ValueError):
        z_normalize([1.0])
    with pytest.raises(ValueError):
        z_normalize(np.ones((2, 3)))


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 40)), elements=finite))
def test_rows_match_single_series(x):
    z, mu, sigma = z_normalize_rows(x)
    for i in range(len(x)):
        zi, ns = z_normalize(x[i])
        np.testing.assert_array_equal(z[i], zi)
        assert sigma[i] == ns.sigma


@given(arrays(np.float64, st.integers(4, 64), elements=finite))
def test_normalized_moments(x):
    z, ns = z_normalize(x)
    if ns.degenerate:
        assert np.all(z == 0)
    else:
        assert abs(z.mean()) < 1e-9
        assert z.std() == pytest.approx(1.0, rel=1e-9)


def test_dataset_layout(rng):
    ds = Dataset.from_raw(rng.normal(size=(10, 32)), block=3)
    assert ds.values.dtype == np.float32 and ds.values.flags.c_contiguous
    assert not ds.values.flags.writeable
    assert (ds.series_count, ds.series_length, len(ds)) == (10, 32, 10)
    np.testing.assert_allclose(ds[4], stats.zscore(ds[4]), atol=1e-5)
    with pytest.raises(ValueError):
        ds.values[0, 0] = 1.0


def test_dataset_flags_degenerate_rows():
    raw = np.vstack([np.arange(8.0), np.full(8, 2.0)])
    ds = Dataset.from_raw(raw)
    assert ds.degenerate.tolist() == [False, True]
    assert np.all(ds[1] == 0)


def test_dataset_rejects_empty():
    with pytest.raises(ValueError):
        Dataset(np.empty((0, 8)))


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 70)), elements=finite))
def test_chunked_sum_close_to_fsum(terms):
    got = accumulate(chunk_sums(terms))
    for i, row in enumerate(terms):
        assert got[i] == pytest.approx(math.fsum(row), rel=1e-9, abs=1e-6)


@given(arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(1, 70)), elements=finite))
def test_batch_and_single_rows_agree_bitwise(terms):
    batch = accumulate(chunk_sums(terms))
    for i in range(len(terms)):
        single = accumulate(chunk_sums(terms[i:i + 1]))[0]
        assert single == batch[i]
        assert abandon_scan(chunk_sums(terms[i:i + 1])[0], math.inf) == batch[i]


def test_chunk_shape_and_empty_rows():
    assert chunk_sums(np.ones((3, 17))).shape == (3, 3)
    assert chunk_sums(np.empty((0, 2 * CHUNK))).shape == (0, 2)
    assert accumulate(chunk_sums(np.empty((0, 8)))).shape == (0,)


def test_euclidean_distance_matches_numpy(rng):
    a, b = rng.normal(size=(2, 100))
    assert euclidean_distance(a, b) == pytest.approx(np.linalg.norm(a - b), rel=1e-12)
    assert euclidean_distance(a, a) == 0.0
    with pytest.raises(ValueError):
        euclidean_distance(a, b[:50])


def test_squared_distances_float32_rows_are_promoted_exactly(rng):
    rows = rng.normal(size=(5, 24)).astype(np.float32)
    q = rng.normal(size=24).astype(np.float32)
    want = ((rows.astype(np.float64) - q.astype(np.float64)) ** 2).sum(axis=1)
    np.testing.assert_allclose(squared_distances(rows, q), want, rtol=1e-12)
