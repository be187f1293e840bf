"""Core types: tagged points, datasets, queries and the top-k result queue.

Keywords are interned to dense integer identifiers when a dataset is
constructed; the string-to-id map lives on the Dataset.  Result ordering
is total: (diameter, cardinality, lexicographic sorted id list), so every
component that fills a ResultQueue is deterministic and directly
comparable against the brute-force reference.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels


class InvalidInputError(ValueError):
    """Raised for malformed datasets, configs, queries or parameters."""


class EnumerationLimitError(RuntimeError):
    """Raised when brute-force candidate enumeration would exceed its cap."""


@dataclass(eq=False)
class Point:
    """A multi-dimensional point with a non-empty set of keyword ids."""
    id: int
    coords: np.ndarray
    keywords: frozenset[int]

    def __repr__(self):
        kws = ",".join(str(k) for k in sorted(self.keywords))
        return f"Point(id={self.id}, d={len(self.coords)}, kw={{{kws}}})"


class Dataset:
    """Array-backed collection of points with an interned keyword table.

    Internally points are kept in ascending-id order ("rank" order); all
    search structures address points by rank and translate back to ids at
    the API boundary.  Construction validates id uniqueness, a uniform
    dimension and non-empty keyword sets.
    """

    def __init__(self, ids, coords, keyword_lists, keyword_names):
        ids = np.asarray(ids, dtype=np.int64)
        coords = np.asarray(coords, dtype=np.float64)
        if ids.ndim != 1 or ids.size == 0:
            raise InvalidInputError("dataset must contain at least one point")
        if coords.ndim != 2 or coords.shape[0] != ids.size:
            raise InvalidInputError("coords must be an (N, d) array aligned with ids")
        if coords.shape[1] < 1:
            raise InvalidInputError("dimension must be at least 1")
        if np.unique(ids).size != ids.size:
            raise InvalidInputError("point ids must be unique")
        if (ids < 0).any():
            raise InvalidInputError("point ids must be non-negative")
        if len(keyword_lists) != ids.size:
            raise InvalidInputError("keyword lists must align with ids")

        order = np.argsort(ids, kind="stable")
        self._ids = ids[order]
        self._coords = np.ascontiguousarray(coords[order])
        # ids are sorted and unique, so a matching span means id == rank + base
        self._id_base = int(self._ids[0])
        self._contiguous = int(self._ids[-1]) - self._id_base == ids.size - 1

        n_names = len(keyword_names)
        counts = np.empty(ids.size, dtype=np.int64)
        flat = []
        for pos, src in enumerate(order):
            kws = sorted(set(int(k) for k in keyword_lists[src]))
            if not kws:
                raise InvalidInputError(f"point {int(self._ids[pos])} has no keywords")
            if kws[0] < 0 or kws[-1] >= n_names:
                raise InvalidInputError(
                    f"point {int(self._ids[pos])} uses a keyword id outside the name table")
            counts[pos] = len(kws)
            flat.extend(kws)
        self._kw_indptr = np.zeros(ids.size + 1, dtype=np.int64)
        np.cumsum(counts, out=self._kw_indptr[1:])
        self._kw_flat = np.asarray(flat, dtype=np.int64)

        self.keyword_names = list(keyword_names)
        self.vocabulary = {name: i for i, name in enumerate(self.keyword_names)}
        if len(self.vocabulary) != len(self.keyword_names):
            raise InvalidInputError("keyword names must be unique")
        self.dictionary = frozenset(int(k) for k in np.unique(self._kw_flat))
        self._by_keyword: dict[int, np.ndarray] | None = None

    # --- basic shape ---

    @property
    def n(self) -> int:
        return self._ids.size

    @property
    def n_points(self) -> int:
        return self._ids.size

    @property
    def dimension(self) -> int:
        return self._coords.shape[1]

    @property
    def total_tags(self) -> int:
        return int(self._kw_flat.size)

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def coords(self) -> np.ndarray:
        """Point coordinates in rank (ascending id) order."""
        return self._coords

    # --- rank/id translation ---

    def rank_of(self, ids) -> np.ndarray:
        """Ranks of the given ids; ids must exist in the dataset."""
        arr = np.asarray(ids, dtype=np.int64)
        if self._contiguous:
            ranks = arr - self._id_base
            if (ranks < 0).any() or (ranks >= self.n).any():
                raise InvalidInputError("unknown point id in rank lookup")
            return ranks
        ranks = np.searchsorted(self._ids, arr)
        if (ranks >= self.n).any() or (self._ids[np.minimum(ranks, self.n - 1)] != arr).any():
            raise InvalidInputError("unknown point id in rank lookup")
        return ranks

    def ids_at(self, ranks) -> np.ndarray:
        return self._ids[np.asarray(ranks, dtype=np.int64)]

    def coords_at(self, ranks) -> np.ndarray:
        return self._coords[np.asarray(ranks, dtype=np.int64)]

    def keywords_at(self, rank: int) -> frozenset[int]:
        lo, hi = self._kw_indptr[rank], self._kw_indptr[rank + 1]
        return frozenset(int(k) for k in self._kw_flat[lo:hi])

    def point(self, point_id: int) -> Point:
        rank = int(self.rank_of(np.asarray([point_id]))[0])
        return Point(point_id, self._coords[rank].copy(), self.keywords_at(rank))

    @property
    def points(self) -> list[Point]:
        return [Point(int(pid), self._coords[r].copy(), self.keywords_at(r))
                for r, pid in enumerate(self._ids)]

    # --- keyword membership ---

    def keyword_ranks(self, keyword: int) -> np.ndarray:
        """Sorted ranks of points carrying the keyword (empty if unused)."""
        if self._by_keyword is None:
            owners = np.repeat(np.arange(self.n, dtype=np.int64),
                               np.diff(self._kw_indptr))
            table: dict[int, np.ndarray] = {}
            order = np.argsort(self._kw_flat, kind="stable")
            sorted_kw = self._kw_flat[order]
            sorted_owner = owners[order]
            bounds = np.flatnonzero(np.diff(sorted_kw)) + 1
            starts = np.concatenate(([0], bounds))
            ends = np.concatenate((bounds, [sorted_kw.size]))
            for s, e in zip(starts, ends):
                table[int(sorted_kw[s])] = np.sort(sorted_owner[s:e])
            self._by_keyword = table
        return self._by_keyword.get(int(keyword), np.empty(0, dtype=np.int64))

    def keyword_mask(self, ranks, keywords) -> np.ndarray:
        """Boolean (len(ranks), len(keywords)) membership matrix."""
        sub = np.asarray(ranks, dtype=np.int64)
        out = np.zeros((sub.size, len(keywords)), dtype=bool)
        for col, kw in enumerate(keywords):
            members = self.keyword_ranks(kw)
            if members.size:
                pos = np.searchsorted(members, sub)
                pos = np.minimum(pos, members.size - 1)
                out[:, col] = members[pos] == sub
        return out

    # --- construction helpers ---

    @classmethod
    def from_points(cls, points, keyword_names) -> "Dataset":
        ids = [p.id for p in points]
        coords = [p.coords for p in points]
        kws = [sorted(p.keywords) for p in points]
        return cls(ids, coords, kws, keyword_names)

    def __repr__(self):
        return (f"Dataset(n={self.n}, d={self.dimension}, "
                f"vocab={len(self.keyword_names)})")


@dataclass(frozen=True)
class Query:
    """An ordered set of distinct keyword ids."""
    keywords: tuple[int, ...]

    def __post_init__(self):
        if len(self.keywords) == 0:
            raise InvalidInputError("query needs at least one keyword")
        if len(set(self.keywords)) != len(self.keywords):
            raise InvalidInputError("query keywords must be distinct")

    @property
    def q(self) -> int:
        return len(self.keywords)

    @classmethod
    def from_names(cls, dataset: Dataset, names) -> "Query":
        missing = [n for n in names if n not in dataset.vocabulary]
        if missing:
            # Unknown names cannot be satisfied by any point; map them to an
            # id outside the dictionary so search reports unsatisfiable.
            ids = []
            fake = len(dataset.keyword_names)
            for n in names:
                if n in dataset.vocabulary:
                    ids.append(dataset.vocabulary[n])
                else:
                    ids.append(fake)
                    fake += 1
            return cls(tuple(ids))
        return cls(tuple(dataset.vocabulary[n] for n in names))


@dataclass(frozen=True)
class ResultEntry:
    """A candidate answer: sorted point ids and their exact diameter."""
    ids: tuple[int, ...]
    diameter: float

    @property
    def sort_key(self):
        return (self.diameter, len(self.ids), self.ids)


class ResultQueue:
    """Fixed-capacity top-k queue ordered by (diameter, size, ids).

    Exact search conceptually seeds the queue with k sentinel entries of
    infinite diameter; those are represented implicitly: r_k is +inf
    until k real entries are present.  Duplicate id sets are rejected.
    """

    def __init__(self, k: int):
        if k < 1:
            raise InvalidInputError("k must be at least 1")
        self.capacity = k
        self.entries: list[ResultEntry] = []
        self._keys: list[tuple] = []
        self._rk = math.inf

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def r_k(self) -> float:
        """Diameter of the k-th entry; +inf while the queue is not full."""
        return self._rk

    def insert(self, entry: ResultEntry) -> bool:
        """Insert iff the entry beats the current k-th entry and is new.

        Returns True when the queue changed.  r_k never increases.
        """
        key = entry.sort_key
        if len(self.entries) >= self.capacity and key >= self._keys[-1]:
            return False
        for existing in self.entries:
            if existing.ids == entry.ids:
                return False
        pos = bisect.bisect_left(self._keys, key)
        self.entries.insert(pos, entry)
        self._keys.insert(pos, key)
        if len(self.entries) > self.capacity:
            self.entries.pop()
            self._keys.pop()
        if len(self.entries) >= self.capacity:
            self._rk = self.entries[-1].diameter
        return True

    def diameters(self) -> list[float]:
        return [e.diameter for e in self.entries]

    def __repr__(self):
        inner = ", ".join(f"({list(e.ids)}, {e.diameter:.6g})" for e in self.entries)
        return f"ResultQueue(k={self.capacity}, [{inner}])"


def queue_insert(queue: ResultQueue, entry: ResultEntry) -> float:
    """Offer an entry to the queue; returns the updated r_k."""
    queue.insert(entry)
    return queue.r_k


def distance(a: Point, b: Point) -> float:
    """Euclidean distance between two points."""
    if len(a.coords) != len(b.coords):
        raise InvalidInputError("points have mismatched dimensions")
    return kernels.point_distance(a.coords, b.coords)


def diameter(points) -> float:
    """Max pairwise distance of a point collection; 0 for a singleton."""
    pts = list(points)
    if not pts:
        raise InvalidInputError("diameter of an empty set is undefined")
    dims = {len(p.coords) for p in pts}
    if len(dims) != 1:
        raise InvalidInputError("points have mismatched dimensions")
    coords = np.asarray([p.coords for p in pts], dtype=np.float64)
    return kernels.pdist_max(coords)
