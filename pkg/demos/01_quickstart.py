"""Build an SFA index over a synthetic corpus and answer a few exact k-NN queries.

Run:  python3 demos/01_quickstart.py
"""
import time

import numpy as np

from sofa import Dataset, ScanEngine, TreeEngine
from sofa.evaluation import index_stats
from sofa.query import QueryStats, normalize_query
from sofa.synthetic import generate, split_queries

# 50k random walks of length 256, with 5 held-out queries
raw = generate("random-walk", 50_005, 256, seed=1)
data, queries = split_queries(raw, 5, seed=2)
ds = Dataset.from_raw(data)
print(ds)

# learn the quantization from a 1% sample, then bulk-load the tree
engine = TreeEngine.build(ds, "sfa", l=16, alphabet=256, sample=0.01, leaf_capacity=2000)
t = engine.times
print(f"build: learn {t.learn:.2f}s, transform {t.transform:.2f}s, tree {t.build:.2f}s")
print(index_stats(engine.tree).summary())
print("selected DFT positions:", engine.model.selected.indices.tolist())

scan = ScanEngine(ds)
for raw_q in queries:
    q = normalize_query(raw_q)
    st = QueryStats()
    t0 = time.perf_counter()
    res = engine.knn(q, k=5, stats=st)
    t_index = time.perf_counter() - t0
    t0 = time.perf_counter()
    ref = scan.knn(q, k=5)
    t_scan = time.perf_counter() - t0
    same = np.array_equal(res.sq_distances, ref.sq_distances)
    print(f"5-NN ids {res.ids.tolist()}  nearest {res.distances[0]:.3f}  "
          f"exact distances {st.exact_count}/{ds.series_count}  "
          f"index {1e3 * t_index:.1f} ms vs scan {1e3 * t_scan:.1f} ms  identical={same}")
