"""Exact k-NN search over z-normalized data series with learned symbolic summaries."""
from .core import Dataset, NormStats, euclidean_distance, z_normalize
from .evaluation import index_stats, pruning_power, tlb, tlb_grid
from .index import IndexConfig, IndexTree, audit_tree, build_index, insert, node_lower_bound
from .query import (KnnResult, QueryStats, ScanEngine, TreeEngine, approximate_search,
                    euclidean_early_abandon, exact_knn, parallel_scan_knn)
from .sax import SaxModel, isax_transform, sax_mindist
from .sfa import (QuantizationModel, SfaWord, learn_mcb, load_model, mind, save_model,
                  sfa_lower_bound, sfa_transform)
from .spectral import real_dft, select_by_variance

__version__ = "0.1.0"

__all__ = [
    "Dataset", "NormStats", "z_normalize", "euclidean_distance",
    "real_dft", "select_by_variance",
    "SfaWord", "QuantizationModel", "learn_mcb", "sfa_transform", "sfa_lower_bound", "mind",
    "save_model", "load_model",
    "SaxModel", "isax_transform", "sax_mindist",
    "IndexConfig", "IndexTree", "build_index", "insert", "node_lower_bound", "audit_tree",
    "KnnResult", "QueryStats", "TreeEngine", "ScanEngine", "approximate_search", "exact_knn",
    "parallel_scan_knn", "euclidean_early_abandon",
    "tlb", "tlb_grid", "pruning_power", "index_stats",
]
