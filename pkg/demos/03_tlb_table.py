"""Tightness of lower bound across alphabet sizes for SFA (equi-width, equi-depth) and iSAX.

Point ``UCR_ARCHIVE`` at an extracted UCR 2018 archive to run on real data;
otherwise a few synthetic profiles stand in.
"""
import os

from sofa.evaluation import load_ucr, tlb_grid, ucr_datasets
from sofa.query import normalize_query
from sofa.core import Dataset
from sofa.synthetic import generate, split_queries

root = os.environ.get("UCR_ARCHIVE", "")
names = ucr_datasets(root)[:5]
if names:
    for name in names:
        train, test = load_ucr(root, name)
        if train.series_count < 256:
            print(f"{name}: only {train.series_count} training series, skipped")
            continue
        print(tlb_grid(train, test.values, name=name).table(), "\n")
else:
    for profile in ("smooth", "noisy", "square-wave", "random-walk"):
        raw = generate(profile, 2010, 256, seed=4)
        data, q = split_queries(raw, 10, seed=5)
        ds = Dataset.from_raw(data)
        queries = [normalize_query(r) for r in q]
        print(tlb_grid(ds, queries, methods=("sfa-ew", "sfa-ed", "sfa-ew-first", "isax"),
                       name=profile).table(), "\n")
