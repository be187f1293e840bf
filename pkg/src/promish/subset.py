"""Within-subset candidate search: pairwise joins and nested-loop growth.

Given the points of one bucket (or the final full scan), points are
grouped per query keyword, groups are ordered so that sparsely joined
pairs are visited first, and candidates are grown one group at a time.
A point may only extend a partial candidate if its distance to every
member is within the current k-th result diameter, so the threshold
tightens as better results are found.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .core import ResultEntry, ResultQueue


class _NullStats:
    """Swallows counter updates when the caller does not want them."""

    def __setattr__(self, name, value):
        object.__setattr__(self, name, value)

    def __getattr__(self, name):
        return 0


def _join_edges(group_coords, group_ranks, threshold: float):
    """Joins with packed edge keys: (lo << 32) | hi for a rank pair.

    Ranks fit comfortably in 31 bits, so the packed key is a plain
    non-negative int and the hot lookup avoids tuple hashing.
    """
    edges: dict[int, float] = {}
    counts: dict[tuple[int, int], int] = {}
    g = len(group_ranks)
    for i in range(g):
        for j in range(i + 1, g):
            if group_ranks[i].size == 0 or group_ranks[j].size == 0:
                counts[(i, j)] = 0
                continue
            dists = kernels.pairwise_distances(group_coords[i], group_coords[j])
            keep = dists <= threshold
            counts[(i, j)] = int(keep.sum())
            ai, bi = np.nonzero(keep)
            if ai.size == 0:
                continue
            ra = group_ranks[i][ai].astype(np.int64)
            rb = group_ranks[j][bi].astype(np.int64)
            lo = np.minimum(ra, rb)
            hi = np.maximum(ra, rb)
            keys = (lo << np.int64(32)) | hi
            edges.update(zip(keys.tolist(), dists[ai, bi].tolist()))
    return edges, counts


def build_join_graph(group_coords, group_ranks, threshold: float):
    """Pairwise inner joins between all group pairs.

    Returns (edges, counts): edges maps an unordered rank pair to its
    distance (only pairs within `threshold`), counts maps a group index
    pair (i, j), i < j, to the number of qualifying point pairs.
    """
    packed, counts = _join_edges(group_coords, group_ranks, threshold)
    edges = {(key >> 32, key & 0xFFFFFFFF): dist for key, dist in packed.items()}
    return edges, counts


def order_groups(counts: dict[tuple[int, int], int], query_keywords) -> list[int]:
    """Greedy group order: repeatedly take the lightest remaining pair.

    Ties between equal-weight pairs go to the lexicographically smaller
    keyword-id pair.  Keywords never touched by a removed pair are
    appended in query order.  Returns positions into query_keywords.
    """
    q = len(query_keywords)
    if q == 1:
        return [0]
    edge_list = []
    for (i, j), weight in counts.items():
        ka, kb = query_keywords[i], query_keywords[j]
        (ka, pa), (kb, pb) = sorted(((ka, i), (kb, j)))
        edge_list.append((weight, (ka, kb), (pa, pb)))
    edge_list.sort()
    order: list[int] = []
    seen = set()
    for _, _, (pa, pb) in edge_list:
        if len(seen) == q:
            break
        for pos in (pa, pb):
            if pos not in seen:
                seen.add(pos)
                order.append(pos)
    for pos in range(q):
        if pos not in seen:
            order.append(pos)
    return order


def canonicalize_candidate(rank_tuple, source, query, minimal: bool = True) -> ResultEntry:
    """Collapse a completed tuple to a minimal covering set with its diameter.

    Duplicate members are merged.  While some member's query keywords are
    all covered by the rest, the removable member whose removal yields the
    smallest diameter is dropped (ties: smallest id).  With minimal=False
    only the duplicate collapse is applied.
    """
    ranks = sorted(set(int(r) for r in rank_tuple))
    if minimal and len(ranks) > 1:
        masks = {r: m for r, m in zip(
            ranks, source.keyword_mask(np.asarray(ranks), query.keywords))}
        while len(ranks) > 1:
            best = None
            for r in ranks:
                others = [o for o in ranks if o != r]
                covered = np.zeros(query.q, dtype=bool)
                for o in others:
                    covered |= masks[o]
                if covered.all():
                    rest = np.asarray(others, dtype=np.int64)
                    diam = kernels.pdist_max(source.coords_at(rest))
                    pid = int(source.ids_at(np.asarray([r]))[0])
                    cand = (diam, pid, r)
                    if best is None or cand < best:
                        best = cand
            if best is None:
                break
            ranks.remove(best[2])
    arr = np.asarray(ranks, dtype=np.int64)
    ids = tuple(int(v) for v in source.ids_at(arr))
    diam = kernels.pdist_max(source.coords_at(arr))
    return ResultEntry(ids, diam)


def _find_candidates(ordered_ranks, edges, queue, source, query,
                     stats=None, minimal: bool = True,
                     scale_tag: int | None = None, on_extend=None) -> float:
    """find_candidates over the packed edge keys of _join_edges."""
    stats = stats if stats is not None else _NullStats()
    groups = [[int(r) for r in g] for g in ordered_ranks]
    depth = len(groups)
    edges_get = edges.get

    def recurse(level: int, current: list[int], current_r: float) -> int:
        if level == depth:
            entry = canonicalize_candidate(current, source, query, minimal)
            stats.tuples_completed += 1
            stats.candidates_offered += 1
            log = getattr(stats, "offers", None)
            if isinstance(log, list):
                log.append((scale_tag, entry.ids))
            queue.insert(entry)
            return 1
        completed = 0
        for cand in groups[level]:
            limit = queue._rk
            grown_r = current_r
            ok = True
            for member in current:
                key = ((member << 32) | cand) if member <= cand else ((cand << 32) | member)
                dist = edges_get(key)
                if dist is None or dist > limit:
                    ok = False
                    break
                if dist > grown_r:
                    grown_r = dist
            if not ok:
                continue
            current.append(cand)
            if on_extend is not None:
                on_extend(tuple(current), grown_r, limit)
            below = recurse(level + 1, current, grown_r)
            current.pop()
            if below == 0 and len(current) + 1 >= 2:
                stats.dead_partials += 1
            completed += below
        return completed

    recurse(0, [], 0.0)
    return queue.r_k


def find_candidates(ordered_ranks, edges, queue: ResultQueue, source, query,
                    stats=None, minimal: bool = True, scale_tag: int | None = None,
                    on_extend=None) -> float:
    """Grow candidates across the ordered groups; returns the final r_k.

    ordered_ranks: list of rank arrays, one per group, already ordered.
    edges: unordered rank-pair -> distance map from build_join_graph.
    Every completed tuple is canonicalized and offered to the queue.
    """
    packed = {(lo << 32) | hi: dist for (lo, hi), dist in edges.items()}
    return _find_candidates(ordered_ranks, packed, queue, source, query,
                            stats, minimal, scale_tag, on_extend)


def _seed_queue(group_ranks, group_coords, source, query, queue, stats,
                minimal: bool) -> None:
    """Insert cheap greedy candidates while the queue is not yet full.

    An unbounded r_k would make the join keep every pairwise edge, so
    before building the graph we grow up to `capacity` tuples: start from
    a member of the smallest group, then take from each remaining group
    the point minimizing the diameter so far.  Seeds are genuine covering
    sets, so inserting them can never change the final answers; the
    recursion re-derives any seed that belongs in the top k.
    """
    order = sorted(range(len(group_ranks)), key=lambda i: group_ranks[i].size)
    first = order[0]
    for s in range(min(queue.capacity, int(group_ranks[first].size))):
        if queue.r_k != float("inf"):
            return
        chosen_ranks = [int(group_ranks[first][s])]
        chosen = [group_coords[first][s]]
        for gi in order[1:]:
            worst = kernels.pairwise_distances(
                group_coords[gi], np.asarray(chosen)).max(axis=1)
            pick = int(np.argmin(worst))
            chosen_ranks.append(int(group_ranks[gi][pick]))
            chosen.append(group_coords[gi][pick])
        queue.insert(canonicalize_candidate(chosen_ranks, source, query,
                                            minimal))
        stats.seed_candidates += 1


def search_in_subset(sub_ranks, source, query, queue: ResultQueue,
                     stats=None, minimal: bool = True,
                     join_pruning: bool = True, scale_tag: int | None = None,
                     force_order=None, on_extend=None) -> ResultQueue:
    """Run the grouped multi-way join over one subset of point ranks.

    Empty subsets and subsets missing any query keyword leave the queue
    untouched.  The join threshold is the queue's r_k after greedy
    seeding (or +inf when join_pruning is False, which changes counters
    but never answers).
    """
    sub = np.asarray(sub_ranks, dtype=np.int64)
    if sub.size == 0:
        return queue
    masks = source.keyword_mask(sub, query.keywords)
    if not masks.any(axis=0).all():
        return queue
    group_ranks = [sub[masks[:, col]] for col in range(query.q)]
    coords = source.coords_at(sub)
    group_coords = [coords[masks[:, col]] for col in range(query.q)]

    stats = stats if stats is not None else _NullStats()
    if join_pruning and queue.r_k == float("inf"):
        _seed_queue(group_ranks, group_coords, source, query, queue, stats,
                    minimal)
    threshold = queue.r_k if join_pruning else float("inf")
    edges, counts = _join_edges(group_coords, group_ranks, threshold)
    order = (list(force_order) if force_order is not None
             else order_groups(counts, query.keywords))
    ordered = [group_ranks[pos] for pos in order]
    if not join_pruning:
        # Freeze the exploration threshold too: candidates are grown with
        # the same infinite limit the graph was built with.
        frozen = _FrozenQueueView(queue)
        _find_candidates(ordered, edges, frozen, source, query, stats,
                         minimal, scale_tag, on_extend)
    else:
        _find_candidates(ordered, edges, queue, source, query, stats,
                         minimal, scale_tag, on_extend)
    return queue


class _FrozenQueueView:
    """Queue proxy whose r_k always reads +inf; inserts pass through."""

    def __init__(self, queue: ResultQueue):
        self._queue = queue
        self._rk = float("inf")

    @property
    def r_k(self) -> float:
        return float("inf")

    def insert(self, entry: ResultEntry) -> bool:
        return self._queue.insert(entry)
