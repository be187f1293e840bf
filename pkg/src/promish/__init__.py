"""ProMiSH: top-k nearest keyword-set search over tagged points.

Given points that each carry keywords, a query names a set of keywords
and asks for the k tightest point sets (smallest maximum pairwise
distance) that jointly cover all of them.  The index hashes random
projections at multiple widths; the exact mode guarantees the true
top-k, the approximate mode trades guarantees for one signature per
point.
"""

from .core import (Dataset, EnumerationLimitError, InvalidInputError, Point,
                   Query, ResultEntry, ResultQueue, diameter, distance,
                   queue_insert)
from .index import (Index, IndexConfig, ProjectionBasis, build_index,
                    bucket_id, derive_base_width, hash_keys, lookup,
                    sample_unit_vectors, signatures)
from .search import (QueryStats, SubsetDedupe, UNSATISFIABLE,
                     candidate_buckets, extract_subset, search,
                     search_approximate, search_exact)
from .subset import (build_join_graph, canonicalize_candidate,
                     find_candidates, order_groups, search_in_subset)
from .oracle import (CandidateUniverse, brute_force_topk, candidates_within,
                     enumerate_candidates)
from .bench import (SyntheticSpec, approx_bound, avg_approx_ratio,
                    bench_kernels, gen_queries, gen_synthetic, pruning_ratio,
                    run_benchmark, space_ratio)
from .persistence import (DiskIndex, IndexIntegrityError, load_dataset,
                          open_index, save_index)
from . import kernels

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Point", "Query", "ResultEntry", "ResultQueue",
    "InvalidInputError", "EnumerationLimitError", "distance", "diameter",
    "queue_insert",
    "Index", "IndexConfig", "ProjectionBasis", "build_index", "hash_keys",
    "signatures", "bucket_id", "derive_base_width", "sample_unit_vectors",
    "lookup",
    "candidate_buckets",
    "extract_subset",
    "search", "search_exact", "search_approximate", "UNSATISFIABLE",
    "QueryStats", "SubsetDedupe",
    "build_join_graph", "order_groups", "canonicalize_candidate",
    "find_candidates", "search_in_subset",
    "enumerate_candidates", "candidates_within", "CandidateUniverse",
    "brute_force_topk",
    "SyntheticSpec", "gen_synthetic", "gen_queries", "avg_approx_ratio",
    "pruning_ratio", "approx_bound", "space_ratio", "run_benchmark",
    "bench_kernels",
    "save_index", "open_index", "load_dataset", "DiskIndex",
    "IndexIntegrityError",
    "kernels",
    "__version__",
]
