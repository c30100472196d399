"""Why a spectral summary can beat PAA: square waves whose period divides the PAA segment.

Every PAA segment of such a series averages to roughly zero, so iSAX words
carry almost no information and its lower bound collapses.  The selected
DFT values keep the energy.
"""
import numpy as np

from sofa import Dataset
from sofa.evaluation import make_summarizer, tlb
from sofa.query import normalize_query
from sofa.sax import SaxModel, paa
from sofa.synthetic import periodic_squares

raw = periodic_squares(3010, 256, periods=(8, 16), seed=3)
ds = Dataset.from_raw(raw[:3000])
queries = np.stack([normalize_query(r) for r in raw[3000:]])

print("PAA of one series (16 segments):", np.round(paa(ds[0], 16), 3))

isax = SaxModel(256, 16, 256)
# the energy sits at 16 and 32 cycles, so let selection look past the first 16 coefficients
sfa = make_summarizer("sfa-ew", ds.values, l=16, a=256, candidate_limit=33)
print("SFA kept coefficients:", sorted(set((sfa.selected.indices // 2).tolist())))
print(f"TLB iSAX   : {tlb(isax, ds, queries):.3f}")
print(f"TLB SFA-EW : {tlb(sfa, ds, queries):.3f}")
