"""Pruning power and query time: SFA index vs iSAX index vs parallel scan.

The high-frequency square-wave profile is where PAA loses most of the
signal, so the SAX tree must verify many more candidates.
"""
import os

from sofa import Dataset, ScanEngine, TreeEngine
from sofa.evaluation import bench
from sofa.query import normalize_query
from sofa.synthetic import generate, split_queries

count = int(os.environ.get("DEMO_COUNT", "200000"))
workers = os.cpu_count() or 1
raw = generate("square-wave", count + 20, 256, seed=6)
data, q = split_queries(raw, 20, seed=7)
ds = Dataset.from_raw(data)
queries = [normalize_query(r) for r in q]

for name, engine in (
    ("sfa", TreeEngine.build(ds, "sfa", workers=workers)),
    ("sax", TreeEngine.build(ds, "sax", workers=workers)),
    ("scan", ScanEngine(ds, workers)),
):
    rep = bench(engine, queries, k=1, workers=workers, name=name)
    print(rep.summary())
