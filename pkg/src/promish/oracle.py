"""Brute-force reference: enumerate every minimal covering set exactly.

The enumerator walks the full cross product of the per-keyword groups in
chunks.  Tuples whose members are distinct and all individually needed
are already minimal and are handled vectorized; the rest (possible only
when points carry several query keywords) are reduced one by one with
the same canonicalization rule the search uses.  Each minimal covering
set appears exactly once regardless of how many raw tuples collapse to
it.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import kernels
from .core import (Dataset, EnumerationLimitError, InvalidInputError, Query,
                   ResultEntry, ResultQueue)
from .subset import canonicalize_candidate

DEFAULT_ENUMERATION_LIMIT = 10_000_000
_CHUNK_ROWS = 262_144


class CandidateUniverse:
    """All minimal covering sets of a query, with exact diameters.

    Sets of full query size live in `full_rows` (rank matrix) aligned
    with `full_diams`; reduced sets (size < q) live in `small_sets` and
    `small_diams`.  The two groups cannot overlap.
    """

    def __init__(self, dataset, query, raw_count, full_rows, full_diams,
                 small_sets, small_diams):
        self.dataset = dataset
        self.query = query
        self.raw_count = raw_count
        self.full_rows = full_rows
        self.full_diams = full_diams
        self.small_sets = small_sets
        self.small_diams = small_diams

    @property
    def count(self) -> int:
        return int(self.full_rows.shape[0]) + len(self.small_sets)

    def diameters(self) -> np.ndarray:
        if self.small_sets:
            return np.concatenate(
                [self.full_diams, np.asarray(self.small_diams)])
        return self.full_diams

    def min_diameter(self) -> float:
        diams = self.diameters()
        if diams.size == 0:
            raise InvalidInputError("query has no candidates")
        return float(diams.min())

    def entries_sorted(self):
        """Yield ResultEntry objects in ascending diameter order."""
        ids = self.dataset.ids
        full_order = np.argsort(self.full_diams, kind="stable")
        small_order = sorted(range(len(self.small_sets)),
                             key=lambda i: self.small_diams[i])
        fi = si = 0
        while fi < full_order.size or si < len(small_order):
            take_full = si >= len(small_order) or (
                fi < full_order.size
                and self.full_diams[full_order[fi]]
                <= self.small_diams[small_order[si]])
            if take_full:
                row = self.full_rows[full_order[fi]]
                yield ResultEntry(tuple(int(v) for v in np.sort(ids[row])),
                                  float(self.full_diams[full_order[fi]]))
                fi += 1
            else:
                sel = small_order[si]
                ranks = np.asarray(sorted(self.small_sets[sel]), dtype=np.int64)
                yield ResultEntry(tuple(int(v) for v in ids[ranks]),
                                  float(self.small_diams[sel]))
                si += 1


def _query_groups(dataset: Dataset, query: Query):
    groups = []
    for kw in query.keywords:
        ranks = dataset.keyword_ranks(kw)
        if ranks.size == 0:
            return None
        groups.append(ranks)
    return groups


def enumerate_candidates(dataset: Dataset, query: Query,
                         limit: int = DEFAULT_ENUMERATION_LIMIT,
                         groups=None) -> CandidateUniverse:
    """All minimal covering sets, or EnumerationLimitError when the raw
    cross product exceeds `limit` tuples."""
    if groups is None:
        groups = _query_groups(dataset, query)
    if groups is None:
        return CandidateUniverse(dataset, query, 0,
                                 np.empty((0, query.q), dtype=np.int64),
                                 np.empty(0), [], [])
    sizes = np.asarray([g.size for g in groups], dtype=np.int64)
    raw = int(np.prod(sizes.astype(object)))
    if raw > limit:
        raise EnumerationLimitError(
            f"{raw} raw tuples exceed the enumeration limit of {limit}")

    q = query.q
    coords = dataset.coords
    # Per-rank bitmask over the query keywords for the minimality test.
    sub = np.unique(np.concatenate(groups))
    mask_cols = dataset.keyword_mask(sub, query.keywords)
    bits = np.zeros(dataset.n, dtype=np.int64)
    weights = 1 << np.arange(q, dtype=np.int64)
    bits[sub] = mask_cols @ weights

    full_parts = []
    need_slow: list[tuple[int, ...]] = []
    for start in range(0, raw, _CHUNK_ROWS):
        stop = min(start + _CHUNK_ROWS, raw)
        flat = np.arange(start, stop, dtype=np.int64)
        pos = np.array(np.unravel_index(flat, sizes)).T      # (c, q)
        rows = np.empty_like(pos)
        for col in range(q):
            rows[:, col] = groups[col][pos[:, col]]
        srows = np.sort(rows, axis=1)
        distinct = np.ones(srows.shape[0], dtype=bool)
        if q > 1:
            distinct = (np.diff(srows, axis=1) != 0).all(axis=1)
        tuple_bits = bits[srows]
        prefix = np.zeros((srows.shape[0], q + 1), dtype=np.int64)
        suffix = np.zeros((srows.shape[0], q + 1), dtype=np.int64)
        for col in range(q):
            prefix[:, col + 1] = prefix[:, col] | tuple_bits[:, col]
            suffix[:, q - col - 1] = suffix[:, q - col] | tuple_bits[:, q - col - 1]
        others = prefix[:, :q] | suffix[:, 1:]
        redundant = (tuple_bits & ~others == 0).any(axis=1)
        fast = distinct & ~redundant
        full_parts.append(srows[fast])
        for row in rows[~fast]:
            need_slow.append(tuple(int(v) for v in row))

    if full_parts:
        full = np.unique(np.concatenate(full_parts), axis=0)
    else:
        full = np.empty((0, q), dtype=np.int64)
    full_diams = kernels.tuple_diameters(coords, full) if full.size else np.empty(0)

    small_map: dict[frozenset, float] = {}
    for raw_tuple in need_slow:
        entry = canonicalize_candidate(raw_tuple, dataset, query, minimal=True)
        key = frozenset(dataset.rank_of(np.asarray(entry.ids)).tolist())
        if key not in small_map:
            small_map[key] = entry.diameter
    # A reduced set always has fewer than q members, so it can never
    # coincide with a row of `full`.
    small_sets = list(small_map.keys())
    small_diams = [small_map[s] for s in small_sets]

    return CandidateUniverse(dataset, query, raw, full, full_diams,
                             small_sets, small_diams)


def candidates_within(dataset: Dataset, query: Query, sub_ranks,
                      limit: int = DEFAULT_ENUMERATION_LIMIT):
    """Universe restricted to a subset of ranks (groups intersected)."""
    sub = np.asarray(sub_ranks, dtype=np.int64)
    masks = dataset.keyword_mask(sub, query.keywords)
    if not masks.any(axis=0).all():
        return None
    groups = [np.sort(sub[masks[:, col]]) for col in range(query.q)]
    return enumerate_candidates(dataset, query, limit, groups=groups)


def brute_force_topk(dataset: Dataset, query: Query, k: int = 1,
                     limit: int = DEFAULT_ENUMERATION_LIMIT):
    """Exact reference top-k via full enumeration.

    Returns a ResultQueue, or the special outcome None when some query
    keyword matches no point (callers treat that as unsatisfiable).
    """
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    groups = _query_groups(dataset, query)
    if groups is None:
        return None
    universe = enumerate_candidates(dataset, query, limit, groups=groups)
    queue = ResultQueue(k)
    for entry in universe.entries_sorted():
        if len(queue) >= queue.capacity and entry.diameter > queue.r_k:
            break
        queue.insert(entry)
    return queue
