import numpy as np
import pytest

from sofa.core import Dataset
from sofa.evaluation import (DEFAULT_ALPHABETS, TLB_HEADER, bench, index_stats, make_summarizer,
                             pruning_fractions, pruning_power, sample_pairs, tlb, tlb_grid, tlb_ratios,
                             write_bench_csv, write_tlb_csv)
from sofa.index import IndexConfig, build_index
from sofa.query import ScanEngine, TreeEngine, normalize_query
from sofa.sax import SaxModel
from sofa.synthetic import periodic_squares

from conftest import corpus


@pytest.fixture(scope="module")
def square_tlb():
    ds, qs = corpus("square-wave", 2000, 256, queries=10, seed=31)
    return ds, qs, tlb_grid(ds, qs, pair_budget=400, name="square")


def test_full_spectrum_tlb_is_one(walk_small):
    ds, qs = walk_small
    n = ds.series_length
    s = make_summarizer("dft", ds.values, l=2 * (n // 2 + 1), candidate_limit=n // 2 + 1)
    assert tlb(s, ds, qs, pair_budget=300) == pytest.approx(1.0, abs=1e-3)


def test_tlb_bounded_and_grid_shape(square_tlb):
    _, _, rep = square_tlb
    assert len(rep.rows) == 3 * len(DEFAULT_ALPHABETS) == 21
    for _, _, pairs, v in rep.rows:
        assert 0.0 <= v <= 1.0 + 1e-6
        assert pairs == 10 * 400


def test_tlb_monotone_in_alphabet(square_tlb):
    _, _, rep = square_tlb
    for m in ("sfa-ew", "sfa-ed", "isax"):
        s = rep.series(m)
        assert all(b >= a - 1e-12 for a, b in zip(s, s[1:])), (m, s)


def test_sfa_tighter_than_isax_on_square_waves(square_tlb):
    _, _, rep = square_tlb
    assert rep.value("sfa-ew", 256) >= rep.value("isax", 256)


def test_flat_paa_corpus_defeats_isax():
    raw = periodic_squares(1200, 256, seed=4)
    ds = Dataset.from_raw(raw[:1000])
    qs = np.stack([normalize_query(r) for r in raw[1000:1010]])
    isax = tlb(SaxModel(256, 16, 256), ds, qs)
    sfa = tlb(make_summarizer("sfa-ew", ds.values, 16, 256, candidate_limit=33), ds, qs)
    assert isax < 0.1 < 0.5 < sfa


def test_tlb_is_deterministic(square_tlb):
    ds, qs, rep = square_tlb
    again = tlb_grid(ds, qs, ("sfa-ew",), (16, 256), pair_budget=400, name="square")
    assert again.value("sfa-ew", 256) == rep.value("sfa-ew", 256)
    assert sample_pairs(100, 10, 3).tolist() == sample_pairs(100, 10, 3).tolist()
    assert sample_pairs(5, 10).tolist() == [0, 1, 2, 3, 4]


def test_tlb_errors(walk_small):
    ds, qs = walk_small
    with pytest.raises(ValueError):
        tlb_grid(ds, qs, ("pca",), (4,))
    same = Dataset(np.repeat(ds.values[:1], 5, axis=0))
    with pytest.raises(ValueError):
        tlb(SaxModel(ds.series_length, 16, 16), same, same.values[:2])


def test_tlb_ratios_per_pair(walk_small):
    ds, qs = walk_small
    r = tlb_ratios(SaxModel(ds.series_length, 16, 64), ds.values, qs[:3], np.arange(50), workers=2)
    assert r.shape == (150,) and np.all((r >= 0) & (r <= 1 + 1e-6))


def test_scan_engine_prunes_nothing(smooth_small):
    ds, qs = smooth_small
    assert pruning_power(ScanEngine(ds), qs[:3]) == 0.0


def test_indexed_query_prunes_almost_everything(smooth_small):
    ds, _ = smooth_small
    eng = TreeEngine.build(ds, "sfa", leaf_capacity=100, sample=0.1)
    assert pruning_power(eng, ds.values[[3, 500, 1200, 2999]], k=1) > 0.9


def test_sfa_prunes_more_than_sax_on_square_waves(square_mid):
    ds, qs = square_mid
    sfa = TreeEngine.build(ds, "sfa", leaf_capacity=1000, sample=0.05)
    sax = TreeEngine.build(ds, "sax", leaf_capacity=1000)
    assert pruning_power(sfa, qs) >= pruning_power(sax, qs)
    assert len(pruning_fractions(sfa, qs[:2])) == 2


def test_index_stats(walk_small):
    ds, _ = walk_small
    dup = Dataset(np.repeat(ds.values[:1], 4, axis=0))
    one = index_stats(build_index(dup, SaxModel(ds.series_length, 16, 16), IndexConfig(10)))
    assert one.max_depth == 1 and one.root_fanout == 1 and one.depth_histogram == {1: 1}
    tree = build_index(ds, SaxModel(ds.series_length, 16, 16), IndexConfig(30))
    st = index_stats(tree)
    assert st.series == ds.series_count
    flags = np.array([n.overflow for _, n in tree.iter_nodes() if n.is_leaf])
    assert np.all(st.fill[~flags] <= 1.0)
    assert "leaves=" in st.summary()


def test_bench_and_csv(smooth_small, tmp_path):
    ds, qs = smooth_small
    eng = TreeEngine.build(ds, "sfa", leaf_capacity=200, sample=0.1)
    rep = bench(eng, qs[:4], k=3, name="sofa")
    assert len(rep.times_ms) == 4 and rep.median_ms > 0
    t = eng.times
    assert t.total == pytest.approx(t.learn + t.transform + t.build)
    write_bench_csv(tmp_path / "b.csv", [rep])
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "engine,query_idx,k,time_ms,exact_distances,pruned_fraction" and len(lines) == 5
    write_tlb_csv(tmp_path / "t.csv", [])
    assert (tmp_path / "t.csv").read_text().strip() == ",".join(TLB_HEADER)
