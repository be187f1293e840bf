"""Top-k drivers over the scale tables, for exact and approximate modes.

Exact mode walks scales from the finest up, exploring every bucket that
contains all query keywords, and stops as soon as the k-th result
diameter is at most half the current bin width: any unseen candidate in
a finer bin cannot beat it.  Approximate mode hashes each point once per
scale, skips the duplicate-subset check, and stops after the first fully
explored scale that leaves the queue full.  If no scale terminates, both
modes fall back to one subset search over every point that carries a
query keyword, which preserves correctness at the cost of that one scan.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, InvalidInputError, Query, ResultQueue
from .index import Index
from .subset import search_in_subset


class Unsatisfiable:
    """Distinct non-error outcome: a query keyword matches no point."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNSATISFIABLE"

    def __bool__(self):
        return False


UNSATISFIABLE = Unsatisfiable()


@dataclass
class QueryStats:
    """Work counters for one search run."""
    buckets_scanned: int = 0
    subsets_explored: int = 0
    subsets_deduped: int = 0
    tuples_completed: int = 0
    dead_partials: int = 0
    candidates_offered: int = 0
    seed_candidates: int = 0     # greedy bounds inserted before each join
    terminated_scale: int | None = None
    fallback_used: bool = False
    offers: list | None = None   # (scale, ids) pairs when offer logging is on

    @property
    def candidates_explored(self) -> int:
        """Completed tuples plus dead-ended partial tuples."""
        return self.tuples_completed + self.dead_partials


def _prime_pool(limit: int = 20_000) -> np.ndarray:
    sieve = np.ones(limit, dtype=bool)
    sieve[:2] = False
    for p in range(2, int(limit ** 0.5) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    return np.flatnonzero(sieve).astype(np.int64)


_POOL = None


class SubsetDedupe:
    """Duplicate-subset detector keyed on two prime-weighted id sums.

    Position i of a sorted subset is weighted by the i-th prime of two
    seeded streams; the (h1, h2) pair keys a table of previously seen
    subsets and colliding entries are compared element-wise, so a hash
    collision can never suppress a genuinely new subset.
    """

    def __init__(self, seed: int, primes_a=None, primes_b=None):
        global _POOL
        if _POOL is None:
            _POOL = _prime_pool()
        self._pool = _POOL[_POOL >= 1009]
        self._rng = np.random.default_rng(seed + 0x5eed)
        if primes_a is not None:
            self._pa = np.asarray(primes_a, dtype=np.uint64)
            self._pb = np.asarray(primes_b, dtype=np.uint64)
            self._fixed = True
        else:
            self._pa = np.empty(0, dtype=np.uint64)
            self._pb = np.empty(0, dtype=np.uint64)
            self._fixed = False
        self._seen: dict[tuple[int, int], list[np.ndarray]] = {}

    def _extend(self, length: int):
        if self._fixed:
            if length > self._pa.size:
                raise InvalidInputError("fixed prime streams are too short")
            return
        while self._pa.size < length:
            grow = max(64, length - self._pa.size)
            picks_a = self._rng.integers(0, self._pool.size, grow)
            picks_b = self._rng.integers(0, self._pool.size, grow)
            self._pa = np.concatenate(
                [self._pa, self._pool[picks_a].astype(np.uint64)])
            self._pb = np.concatenate(
                [self._pb, self._pool[picks_b].astype(np.uint64)])

    def seen_before(self, sorted_ids: np.ndarray) -> bool:
        """Record the subset; True iff an identical subset was seen earlier."""
        n = sorted_ids.size
        self._extend(n)
        u = sorted_ids.astype(np.uint64)
        h1 = int(np.dot(u, self._pa[:n]))
        h2 = int(np.dot(u, self._pb[:n]))
        key = (h1, h2)
        bucket = self._seen.get(key)
        if bucket is None:
            self._seen[key] = [sorted_ids.copy()]
            return False
        for prev in bucket:
            if prev.size == n and bool(np.array_equal(prev, sorted_ids)):
                return True
        bucket.append(sorted_ids.copy())
        return False


def candidate_buckets(index: Index, scale: int, query: Query) -> np.ndarray:
    """Bucket ids containing all query keywords at the given scale.

    Each keyword's bucket list holds distinct ids, so a bucket reaches an
    occurrence count of q exactly when it lies in every list; this is the
    sorted intersection of the q lists.
    """
    lists = [index.khb_list(scale, kw) for kw in query.keywords]
    lists.sort(key=len)
    acc = lists[0]
    for other in lists[1:]:
        if acc.size == 0:
            break
        acc = np.intersect1d(acc, other, assume_unique=True)
    return acc


def extract_subset(bucket_ids: np.ndarray, active: np.ndarray, source,
                   dedupe: SubsetDedupe | None, stats: QueryStats):
    """Filter a bucket to active points and drop already-seen subsets.

    Returns the rank array of the surviving subset, or None when the
    subset is empty or a duplicate.
    """
    if bucket_ids.size == 0:
        return None
    ranks = source.rank_of(bucket_ids)
    sub = ranks[active[ranks]]
    if sub.size == 0:
        return None
    if dedupe is not None and dedupe.seen_before(source.ids_at(sub)):
        stats.subsets_deduped += 1
        return None
    return sub


def search(index: Index, source, query: Query, k: int = 1,
           mode: str | None = None, *, stats: QueryStats | None = None,
           subset_dedupe: bool = True, minimal_candidates: bool = True,
           join_pruning: bool = True, offer_log: bool = False,
           run_fallback: bool = True):
    """Top-k search; returns a ResultQueue or UNSATISFIABLE.

    `source` supplies point data (a Dataset, or a disk handle opened from
    a saved index).  The requested mode must match the index mode.
    """
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    mode = mode if mode is not None else index.mode
    if mode != index.mode:
        raise InvalidInputError(
            f"index was built for mode {index.mode!r}, not {mode!r}")
    for kw in query.keywords:
        if index.kp_list(kw).size == 0:
            return UNSATISFIABLE

    stats = stats if stats is not None else QueryStats()
    if offer_log and stats.offers is None:
        stats.offers = []
    queue = ResultQueue(k)

    active = np.zeros(source.n_points, dtype=bool)
    for kw in query.keywords:
        active[source.rank_of(index.kp_list(kw))] = True

    dedupe = None
    if mode == "exact" and subset_dedupe:
        dedupe = SubsetDedupe(index.config.seed)

    exact = mode == "exact"
    for s in range(index.n_scales):
        for bucket in candidate_buckets(index, s, query):
            stats.buckets_scanned += 1
            sub = extract_subset(index.bucket_points(s, int(bucket)),
                                 active, source, dedupe, stats)
            if sub is None:
                continue
            stats.subsets_explored += 1
            search_in_subset(sub, source, query, queue, stats,
                             minimal=minimal_candidates,
                             join_pruning=join_pruning, scale_tag=s)
        if exact:
            if queue.r_k <= index.base_width * float(2 ** s) / 2.0:
                stats.terminated_scale = s
                return queue
        elif len(queue) >= k:
            stats.terminated_scale = s
            return queue

    if run_fallback:
        stats.fallback_used = True
        sub = np.flatnonzero(active)
        search_in_subset(sub, source, query, queue, stats,
                         minimal=minimal_candidates,
                         join_pruning=join_pruning, scale_tag=-1)
    return queue


# Convenience aliases matching the two public entry points.

def search_exact(index: Index, source, query: Query, k: int = 1, **kw):
    return search(index, source, query, k, mode="exact", **kw)


def search_approximate(index: Index, source, query: Query, k: int = 1, **kw):
    return search(index, source, query, k, mode="approximate", **kw)
