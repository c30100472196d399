import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sofa.core import Dataset, squared_distances
from sofa.sax import SaxModel
from sofa.sfa import (DegenerateDimensionError, QuantizationModel, SfaWord, chunked_lower_bound,
                      equi_depth_bins, equi_width_bins, learn_mcb, load_model, lower_bounds, mind,
                      mind_terms, model_from_bytes, save_model, sfa_lower_bound, sfa_transform)
from sofa.spectral import real_dft


@pytest.fixture(scope="module")
def smooth_model(smooth_small):
    ds, _ = smooth_small
    return learn_mcb(ds, 16, 256, 1.0, "ew")


def test_equi_width_breakpoints():
    bp = equi_width_bins([0.0, 1.0, 0.25, 0.9], 4)
    np.testing.assert_allclose(bp, [0.25, 0.5, 0.75])
    with pytest.raises(DegenerateDimensionError):
        equi_width_bins([2.0, 2.0, 2.0], 4)


def test_equi_width_rows_are_nested_across_alphabets(rng):
    v = rng.normal(size=500)
    for a in (4, 8, 16, 32, 64, 128):
        np.testing.assert_allclose(equi_width_bins(v, 2 * a)[1::2], equi_width_bins(v, a), rtol=1e-12)


def test_equi_depth_breakpoints_are_rank_quantiles(rng):
    v = rng.normal(size=1000)
    bp = equi_depth_bins(v, 8)
    s = np.sort(v)
    want = [s[math.ceil(i * 1000 / 8)] for i in range(1, 8)]
    np.testing.assert_array_equal(bp, want)
    counts = np.bincount(np.searchsorted(bp, v, side="right"), minlength=8)
    assert counts.min() >= 124 and counts.max() <= 126


def test_equi_depth_nudges_collapsed_breakpoints():
    v = np.array([0.0] * 90 + list(np.linspace(1, 2, 10)))
    bp, moved = equi_depth_bins(v, 8, return_nudged=True)
    assert moved
    assert np.all(np.diff(bp) > 0)
    with pytest.raises(ValueError):
        equi_depth_bins(np.arange(4.0), 8)


@given(st.floats(-5, 5), st.integers(0, 7))
def test_mind_against_interval_oracle(v, s):
    row = np.array([-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5])
    lo = -np.inf if s == 0 else row[s - 1]
    hi = np.inf if s == 7 else row[s]
    want = max(lo - v, 0.0) + max(v - hi, 0.0)
    assert mind(v, s, row) == pytest.approx(want)
    got = mind_terms(np.array([v]), np.array([lo]), np.array([hi]))[0]
    assert got == pytest.approx(want)


def test_mind_at_reduced_cardinality_spans_merged_bins():
    row = np.array([-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5])
    # 1 bit: symbol 1 covers [0, inf)
    assert mind(-0.25, 1, row, cardinality=1) == pytest.approx(0.25)
    assert mind(3.0, 1, row, cardinality=1) == 0.0
    # 2 bits: symbol 1 covers [-1, 0)
    assert mind(0.4, 1, row, cardinality=2) == pytest.approx(0.4)


def test_sfa_word_validation_and_truncation():
    w = SfaWord([200, 3], [8, 8])
    t = w.truncate(2)
    assert t.symbols.tolist() == [3, 0] and t.cardinality.tolist() == [2, 2]
    with pytest.raises(ValueError):
        SfaWord([4], [2])
    with pytest.raises(ValueError):
        SfaWord([0], [9])
    with pytest.raises(ValueError):
        t.truncate(3)


def test_quantize_counts_breakpoints_at_or_below(smooth_model, rng):
    vals = rng.normal(scale=3, size=(200, 16))
    vals[0] = smooth_model.breakpoints[:, 10]  # exactly on a breakpoint -> upper bin
    words = smooth_model.quantize(vals)
    want = (smooth_model.breakpoints[None, :, :] <= vals[:, :, None]).sum(axis=2)
    np.testing.assert_array_equal(words, want)
    assert np.all(words[0] == 11)


def test_transform_single_and_batch_agree(smooth_small, smooth_model):
    ds, _ = smooth_small
    batch = smooth_model.transform(ds.values[:50], block=7)
    for i in range(50):
        w = sfa_transform(ds[i], smooth_model)
        assert np.array_equal(w.symbols, batch[i]) and np.all(w.cardinality == 8)


def test_lower_bound_below_squared_distance(smooth_small, smooth_model, rng):
    ds, qs = smooth_small
    words = smooth_model.transform(ds.values)
    lo, hi = smooth_model.word_bounds(words)
    for q in qs:
        lbd = lower_bounds(smooth_model.project(q), lo, hi, smooth_model.weights)
        ed = squared_distances(ds.values, q)
        assert np.all(lbd <= ed + 1e-5)


@given(st.integers(0, 2999), st.integers(0, 19), st.integers(1, 8))
def test_lower_bound_grows_with_cardinality(smooth_small, smooth_model, i, qi, bits):
    ds, qs = smooth_small
    word = smooth_model.full_word(smooth_model.transform(ds[i]))
    proj = smooth_model.project(qs[qi])
    coarse = sfa_lower_bound(proj, word.truncate(bits), smooth_model)
    fine = sfa_lower_bound(proj, word, smooth_model)
    assert coarse <= fine
    assert fine <= float(squared_distances(ds[i], qs[qi])[0]) + 1e-5


def test_batched_and_single_kernels_agree(smooth_small, smooth_model):
    ds, qs = smooth_small
    words = smooth_model.transform(ds.values[:100])
    lo, hi = smooth_model.word_bounds(words)
    proj = smooth_model.project(qs[0])
    batch = lower_bounds(proj, lo, hi, smooth_model.weights)
    for i in range(100):
        assert chunked_lower_bound(proj, lo[i], hi[i], smooth_model.weights) == batch[i]


def test_learn_is_deterministic_and_full_sample_is_identity(smooth_small):
    ds, _ = smooth_small
    a = learn_mcb(ds, 8, 64, 0.1, "ed", seed=3)
    b = learn_mcb(ds, 8, 64, 0.1, "ed", seed=3)
    assert a.to_bytes() == b.to_bytes()
    full = learn_mcb(ds, 8, 64, 1.0, "ew")
    again = learn_mcb(np.array(ds.values), 8, 64, 5.0, "ew", seed=99)
    assert full.to_bytes() == again.to_bytes()


def test_learn_selects_by_variance_over_first_coefficients(smooth_small):
    ds, _ = smooth_small
    m = learn_mcb(ds, 6, 16, 1.0, "ew")
    var = real_dft(ds.values.astype(np.float64))[:, :32].var(axis=0, ddof=1)
    assert m.selected.indices.tolist() == np.argsort(-var, kind="stable")[:6].tolist()
    first = learn_mcb(ds, 6, 16, 1.0, "ew", selection="first")
    assert first.selected.indices.tolist() == [2, 3, 4, 5, 6, 7]


def test_two_cycle_square_waves_select_nyquist(rng):
    n = 8
    sign = rng.choice([-1.0, 1.0], size=(300, 1))
    raw = sign * np.where(np.arange(n) % 2 == 0, 1.0, -1.0) * rng.uniform(1, 5, size=(300, 1))
    m = learn_mcb(Dataset.from_raw(raw), 1, 4, 1.0, "ew")
    assert m.selected.indices.tolist() == [n]  # real part of coefficient n/2


def test_learn_rejects_small_sample(smooth_small):
    ds, _ = smooth_small
    with pytest.raises(ValueError):
        learn_mcb(ds, 16, 256, 0.01)
    with pytest.raises(ValueError):
        learn_mcb(ds, 16, 16, 1.0, binning="median")


def test_model_validation():
    from sofa.spectral import SelectedIndices
    sel = SelectedIndices.for_positions([2, 3], 16)
    with pytest.raises(ValueError):
        QuantizationModel(16, np.array([[0.0, 0.0, 1.0], [0, 1, 2]]), sel)
    with pytest.raises(ValueError):
        QuantizationModel(16, np.zeros((2, 4)), sel)


@pytest.mark.parametrize("binning", ["ew", "ed"])
def test_model_roundtrip_bit_exact(smooth_small, binning, tmp_path):
    ds, qs = smooth_small
    m = learn_mcb(ds, 16, 256, 1.0, binning)
    blob = m.to_bytes()
    back = model_from_bytes(blob)
    assert back.to_bytes() == blob
    np.testing.assert_array_equal(back.transform(ds.values[:100]), m.transform(ds.values[:100]))
    save_model(m, tmp_path / "m.bin")
    assert load_model(tmp_path / "m.bin").to_bytes() == blob
    sax = SaxModel(64, 16, 256)
    assert model_from_bytes(sax.to_bytes()).to_bytes() == sax.to_bytes()
    with pytest.raises(ValueError):
        model_from_bytes(b"garbage" + blob)
    with pytest.raises(ValueError):
        model_from_bytes(blob + b"\x00")
