"""Projection-hash index: keyword lists plus L scales of bucket tables.

Every point is projected onto m shared random unit vectors.  At scale s
the projection axis is cut into bins of width w0 * 2**s.  Exact mode uses
two half-shifted bin grids per vector, so each point lands in 2**m
signatures; approximate mode uses the plain grid only and each point
lands in exactly one signature.  A signature is reduced to a bucket id
with a fixed prime-weighted hash into a table of `table_size` slots.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, InvalidInputError

MODES = ("exact", "approximate")


def _first_odd_primes(count: int, minimum: int = 31) -> tuple[int, ...]:
    found = []
    n = minimum
    while len(found) < count:
        if n % 2 == 1 and all(n % p for p in range(3, int(math.isqrt(n)) + 1, 2)):
            found.append(n)
        n += 1
    return tuple(found)


@dataclass
class IndexConfig:
    """Build parameters.  w0=None derives the base bin width from the data."""
    m: int = 2
    scales: int = 5
    w0: float | None = None
    table_size: int = 10_000
    seed: int = 0
    mode: str = "exact"
    primes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.m < 1:
            raise InvalidInputError("m must be at least 1")
        if self.scales < 1:
            raise InvalidInputError("scales must be at least 1")
        if self.table_size < 1:
            raise InvalidInputError("table_size must be at least 1")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}")
        if self.w0 is not None and not self.w0 > 0:
            raise InvalidInputError("w0 must be positive when given")
        if self.primes is None:
            self.primes = _first_odd_primes(self.m)
        else:
            self.primes = tuple(int(p) for p in self.primes)
            if len(self.primes) < self.m:
                raise InvalidInputError("need at least m primes")


@dataclass
class ProjectionBasis:
    """m unit projection vectors shared by all scales, plus the data span."""
    vectors: np.ndarray          # (m, d)
    span: float                  # widest projected extent over the m vectors

    def __post_init__(self):
        norms = np.linalg.norm(self.vectors, axis=1)
        if not np.all(np.abs(norms - 1.0) < 1e-9):
            raise InvalidInputError("projection vectors must be unit length")


def sample_unit_vectors(dimension: int, m: int, seed: int) -> np.ndarray:
    """m i.i.d. standard-normal directions, normalized to unit length."""
    if dimension < 1 or m < 1:
        raise InvalidInputError("dimension and m must be positive")
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((m, dimension))
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    # A zero draw has probability ~0 but would poison the normalization.
    while (norms == 0).any():
        redo = norms[:, 0] == 0
        vectors[redo] = rng.standard_normal((int(redo.sum()), dimension))
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors / norms


def derive_base_width(span: float, scales: int) -> float:
    """Base bin width so the coarsest scale covers half the data span."""
    if span <= 0:
        return 1.0
    return span / float(2 ** scales)


def hash_keys(projection: float, width: float, constant: int, mode: str = "exact"):
    """Bin key(s) of a projected value: plain grid, plus shifted grid in exact mode."""
    if width <= 0:
        raise InvalidInputError("bin width must be positive")
    h1 = math.floor(projection / width)
    if mode == "approximate":
        return (h1,)
    h2 = math.floor((projection - width / 2.0) / width) + constant
    return (h1, h2)


def signatures(key_pairs) -> list[tuple[int, ...]]:
    """Order-preserving cartesian product of per-vector key choices."""
    return [tuple(combo) for combo in itertools.product(*key_pairs)]


def bucket_id(signature, primes, table_size: int) -> int:
    """|sum(key_i * prime_i)| mod table_size."""
    if len(primes) < len(signature):
        raise InvalidInputError("not enough primes for the signature")
    acc = 0
    for key, prime in zip(signature, primes):
        acc += int(key) * int(prime)
    return abs(acc) % table_size


class ScaleTable:
    """One scale: bucket table plus keyword-to-bucket inverted index."""

    def __init__(self, scale, width, table, keyword_buckets, hash_constants,
                 placements):
        self.scale = scale
        self.width = width
        self.table = table                      # bucket id -> sorted point ids
        self.keyword_buckets = keyword_buckets  # keyword id -> sorted bucket ids
        self.hash_constants = hash_constants    # per-vector C, None in approx mode
        self.placements = placements            # signature placements generated

    def bucket_points(self, bucket: int) -> np.ndarray:
        return self.table.get(int(bucket), np.empty(0, dtype=np.int64))

    def buckets_for_keyword(self, keyword: int) -> np.ndarray:
        return self.keyword_buckets.get(int(keyword), np.empty(0, dtype=np.int64))


class Index:
    """The built structure: keyword lists, basis, and one table per scale."""

    def __init__(self, config, basis, base_width, keyword_points, scales,
                 n_points, dimension):
        self.config = config
        self.basis = basis
        self.base_width = base_width
        self.keyword_points = keyword_points    # keyword id -> sorted point ids
        self.scales = scales                    # list[ScaleTable]
        self.n_points = n_points
        self.dimension = dimension

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def n_scales(self) -> int:
        return len(self.scales)

    def scale_width(self, scale: int) -> float:
        return self.scales[scale].width

    def kp_list(self, keyword: int) -> np.ndarray:
        return self.keyword_points.get(int(keyword), np.empty(0, dtype=np.int64))

    def khb_list(self, scale: int, keyword: int) -> np.ndarray:
        if not 0 <= scale < len(self.scales):
            raise InvalidInputError(f"scale {scale} out of range")
        return self.scales[scale].buckets_for_keyword(keyword)

    def bucket_points(self, scale: int, bucket: int) -> np.ndarray:
        if not 0 <= scale < len(self.scales):
            raise InvalidInputError(f"scale {scale} out of range")
        return self.scales[scale].bucket_points(bucket)


def lookup(index: Index, kind: str, keyword: int, scale: int | None = None):
    """Inverted-list access: kind is "keyword-points" or "keyword-buckets"."""
    if kind == "keyword-points":
        return index.kp_list(keyword)
    if kind == "keyword-buckets":
        if scale is None:
            raise InvalidInputError("keyword-buckets lookup needs a scale")
        return index.khb_list(scale, keyword)
    raise InvalidInputError(f"unknown lookup kind: {kind}")


def _group_pairs(bucket_arr: np.ndarray, value_arr: np.ndarray):
    """Dedupe (bucket, value) pairs and group values per bucket."""
    order = np.lexsort((value_arr, bucket_arr))
    b = bucket_arr[order]
    v = value_arr[order]
    if b.size:
        fresh = np.ones(b.size, dtype=bool)
        fresh[1:] = (b[1:] != b[:-1]) | (v[1:] != v[:-1])
        b = b[fresh]
        v = v[fresh]
    out: dict[int, np.ndarray] = {}
    if b.size == 0:
        return out
    bounds = np.flatnonzero(np.diff(b)) + 1
    starts = np.concatenate(([0], bounds))
    ends = np.concatenate((bounds, [b.size]))
    for s, e in zip(starts, ends):
        out[int(b[s])] = v[s:e].copy()
    return out


def build_index(dataset: Dataset, config: IndexConfig) -> Index:
    """Project, derive widths, and hash every point into every scale.

    Deterministic: identical (dataset, config) pairs produce identical
    structures, including bucket contents and hash constants.
    """
    vectors = sample_unit_vectors(dataset.dimension, config.m, config.seed)
    projections = dataset.coords @ vectors.T            # (N, m), rank order
    spans = projections.max(axis=0) - projections.min(axis=0)
    span = float(spans.max()) if spans.size else 0.0
    basis = ProjectionBasis(vectors, span)
    base_width = config.w0 if config.w0 is not None else derive_base_width(
        span, config.scales)

    ids = dataset.ids
    n = dataset.n
    keyword_points = {int(kw): ids[dataset.keyword_ranks(kw)]
                      for kw in sorted(dataset.dictionary)}

    kw_counts = np.diff(dataset._kw_indptr)
    point_kw_owner = np.repeat(np.arange(n, dtype=np.int64), kw_counts)
    point_kw_flat = dataset._kw_flat

    scales = []
    for s in range(config.scales):
        width = base_width * float(2 ** s)
        h1 = np.floor(projections / width).astype(np.int64)     # (N, m)
        if config.mode == "exact":
            constants = [int(h1[:, j].max() - h1[:, j].min() + 2)
                         for j in range(config.m)]
            h2 = (np.floor((projections - width / 2.0) / width).astype(np.int64)
                  + np.asarray(constants, dtype=np.int64))
            choices = [(h1[:, j], h2[:, j]) for j in range(config.m)]
            combos = list(itertools.product(range(2), repeat=config.m))
        else:
            constants = None
            choices = [(h1[:, j],) for j in range(config.m)]
            combos = [(0,) * config.m]

        primes = np.asarray(config.primes[:config.m], dtype=np.int64)
        bucket_cols = []
        for combo in combos:
            acc = np.zeros(n, dtype=np.int64)
            for j, pick in enumerate(combo):
                acc += choices[j][pick] * primes[j]
            bucket_cols.append(np.abs(acc) % config.table_size)
        placements = n * len(combos)

        all_buckets = np.concatenate(bucket_cols)
        all_ids = np.tile(ids, len(combos))
        table = _group_pairs(all_buckets, all_ids)

        # keyword -> buckets: expand each (bucket, point) placement by the
        # point's keywords, then dedupe.
        kw_buckets_parts = []
        kw_ids_parts = []
        for col in bucket_cols:
            kw_buckets_parts.append(col[point_kw_owner])
            kw_ids_parts.append(point_kw_flat)
        keyword_buckets = _group_pairs(
            np.concatenate(kw_ids_parts).astype(np.int64),
            np.concatenate(kw_buckets_parts))

        scales.append(ScaleTable(s, width, table, keyword_buckets,
                                 constants, placements))

    return Index(config, basis, base_width, keyword_points, scales,
                 n, dataset.dimension)
