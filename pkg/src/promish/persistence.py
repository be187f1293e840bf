"""On-disk index layout with lazy reads.

Layout under one root directory::

    meta                       line-oriented key=value manifest
    points.dat                 fixed-size point records in ascending-id order
    kp/<kw>                    point ids carrying keyword <kw>
    scale_<s>/khb/<kw>         bucket ids containing keyword <kw> at scale s
    scale_<s>/buckets/<b>      point ids stored in bucket <b> at scale s

All integer arrays are little-endian unsigned 64-bit, coordinates are
little-endian float64.  A ``.incomplete`` marker exists while a save is
in flight; readers refuse roots that still carry it.  Bucket, keyword
and khb files are only read when asked for, and a DiskIndex counts every
bucket file it touches, so tests can observe which buckets a query
actually hit.

The manifest stores floats through repr, which round-trips exactly, so
a rebuilt in-memory index is bit-identical to the one that was saved.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import Dataset, InvalidInputError
from .index import IndexConfig, Index, ProjectionBasis

FORMAT_VERSION = 1
_MARKER = ".incomplete"


class IndexIntegrityError(RuntimeError):
    """A required file is missing or the manifest is inconsistent."""


def _write_u64(path: Path, arr) -> None:
    data = np.asarray(arr, dtype=np.int64)
    if data.size and (data < 0).any():
        raise InvalidInputError("cannot persist negative ids")
    path.write_bytes(data.astype("<u8").tobytes())


def _read_u64(path: Path) -> np.ndarray:
    return np.frombuffer(path.read_bytes(), dtype="<u8").astype(np.int64)


def _point_dtype(dimension: int, t_max: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("coords", "<f8", (dimension,)),
                     ("nkw", "<u8"), ("kws", "<u8", (t_max,))])


def save_index(index: Index, dataset: Dataset, root, overwrite: bool = False) -> Path:
    """Write the index plus its point data under `root`."""
    root = Path(root)
    if root.exists():
        if not root.is_dir():
            raise InvalidInputError(f"{root} exists and is not a directory")
        if any(root.iterdir()) and not overwrite:
            raise InvalidInputError(f"{root} exists and is not empty")
    else:
        root.mkdir(parents=True)
    if dataset.n != index.n_points or dataset.dimension != index.dimension:
        raise InvalidInputError("index and dataset shapes disagree")
    for name in dataset.keyword_names:
        if "\n" in name or "\r" in name:
            raise InvalidInputError("keyword names must be single-line")

    marker = root / _MARKER
    marker.touch()

    cfg = index.config
    used = sorted(dataset.dictionary)
    t_max = int(np.diff(dataset._kw_indptr).max())
    lines = [
        f"version={FORMAT_VERSION}",
        f"mode={cfg.mode}",
        f"m={cfg.m}",
        f"scales={cfg.scales}",
        f"table_size={cfg.table_size}",
        f"seed={cfg.seed}",
        "primes=" + ",".join(str(p) for p in cfg.primes),
        f"dimension={index.dimension}",
        f"n_points={index.n_points}",
        f"n_keywords={len(dataset.keyword_names)}",
        f"t_max={t_max}",
        "configured_w0=" + ("" if cfg.w0 is None else repr(cfg.w0)),
        f"base_width={index.base_width!r}",
        f"span={index.basis.span!r}",
        "used_keywords=" + ",".join(str(k) for k in used),
    ]
    for s in range(index.n_scales):
        lines.append(f"width.{s}={index.scale_width(s)!r}")
        constants = index.scales[s].hash_constants
        if constants is not None:
            lines.append(f"constants.{s}=" + ",".join(str(c) for c in constants))
    for j in range(cfg.m):
        lines.append(f"vector.{j}=" +
                     ",".join(repr(float(v)) for v in index.basis.vectors[j]))
    for i, name in enumerate(dataset.keyword_names):
        lines.append(f"keyword.{i}={name}")
    (root / "meta").write_text("\n".join(lines) + "\n", encoding="utf-8")

    dtype = _point_dtype(index.dimension, t_max)
    records = np.zeros(dataset.n, dtype=dtype)
    records["id"] = dataset.ids
    records["coords"] = dataset.coords
    for rank in range(dataset.n):
        lo, hi = dataset._kw_indptr[rank], dataset._kw_indptr[rank + 1]
        kws = dataset._kw_flat[lo:hi]
        records["nkw"][rank] = kws.size
        records["kws"][rank, :kws.size] = kws
    (root / "points.dat").write_bytes(records.tobytes())

    kp_dir = root / "kp"
    kp_dir.mkdir(exist_ok=True)
    for kw in used:
        _write_u64(kp_dir / str(kw), index.kp_list(kw))
    for s in range(index.n_scales):
        sdir = root / f"scale_{s}"
        (sdir / "buckets").mkdir(parents=True, exist_ok=True)
        (sdir / "khb").mkdir(exist_ok=True)
        for bucket, ids in index.scales[s].table.items():
            _write_u64(sdir / "buckets" / str(int(bucket)), ids)
        for kw in used:
            _write_u64(sdir / "khb" / str(kw), index.khb_list(s, kw))

    marker.unlink()
    return root


def _parse_meta(path: Path) -> dict:
    if not path.is_file():
        raise IndexIntegrityError(f"missing manifest file {path}")
    fields: dict[str, str] = {}
    for ln, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        if "=" not in line:
            raise IndexIntegrityError(f"{path}:{ln}: not a key=value line")
        key, _, value = line.partition("=")
        fields[key] = value
    return fields


class DiskIndex:
    """Read-only handle over a saved index directory.

    Serves both roles a query needs: the index side (keyword lists,
    scale tables, buckets) and the point side (ids, coordinates,
    keyword membership), reading bucket files only on demand.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        if not self.root.is_dir():
            raise IndexIntegrityError(f"{self.root} is not a directory")
        if (self.root / _MARKER).exists():
            raise IndexIntegrityError(
                f"{self.root} carries {_MARKER}: a save never finished")
        meta = _parse_meta(self.root / "meta")
        try:
            version = int(meta["version"])
            if version != FORMAT_VERSION:
                raise IndexIntegrityError(
                    f"unsupported format version {version}")
            self.mode = meta["mode"]
            m = int(meta["m"])
            scales = int(meta["scales"])
            table_size = int(meta["table_size"])
            seed = int(meta["seed"])
            primes = tuple(int(p) for p in meta["primes"].split(","))
            self.dimension = int(meta["dimension"])
            self.n_points = int(meta["n_points"])
            self.n_keywords = int(meta["n_keywords"])
            self.t_max = int(meta["t_max"])
            w0_raw = meta["configured_w0"]
            self.base_width = float(meta["base_width"])
            span = float(meta["span"])
            self._widths = [float(meta[f"width.{s}"]) for s in range(scales)]
            self._constants = []
            for s in range(scales):
                key = f"constants.{s}"
                if key in meta:
                    self._constants.append(
                        [int(c) for c in meta[key].split(",")])
                else:
                    self._constants.append(None)
            vectors = np.asarray(
                [[float(v) for v in meta[f"vector.{j}"].split(",")]
                 for j in range(m)], dtype=np.float64)
            used = meta["used_keywords"]
            self._used = frozenset(
                int(k) for k in used.split(",")) if used else frozenset()
            self.keyword_names = [meta[f"keyword.{i}"]
                                  for i in range(self.n_keywords)]
        except KeyError as exc:
            raise IndexIntegrityError(
                f"manifest is missing field {exc.args[0]!r}") from None
        self.config = IndexConfig(
            m=m, scales=scales,
            w0=float(w0_raw) if w0_raw else None,
            table_size=table_size, seed=seed, mode=self.mode, primes=primes)
        self.basis = ProjectionBasis(vectors, span)
        self.vocabulary = {name: i for i, name in enumerate(self.keyword_names)}
        self.dictionary = self._used

        points_path = self.root / "points.dat"
        if not points_path.is_file():
            raise IndexIntegrityError(f"missing data file {points_path}")
        dtype = _point_dtype(self.dimension, self.t_max)
        expected = self.n_points * dtype.itemsize
        actual = points_path.stat().st_size
        if actual != expected:
            raise IndexIntegrityError(
                f"{points_path} holds {actual} bytes, expected {expected}")
        self._mm = np.memmap(points_path, dtype=dtype, mode="r")
        self._id_col: np.ndarray | None = None
        self._kp_cache: dict[int, np.ndarray] = {}
        self._khb_cache: dict[tuple[int, int], np.ndarray] = {}

        self.files_read = 0
        self.bucket_reads: list[tuple[int, int]] = []

    # --- counters ---

    def reset_counters(self) -> None:
        self.files_read = 0
        self.bucket_reads = []

    def _load(self, path: Path) -> np.ndarray:
        self.files_read += 1
        return _read_u64(path)

    # --- index side ---

    @property
    def n_scales(self) -> int:
        return self.config.scales

    def scale_width(self, scale: int) -> float:
        if not 0 <= scale < self.config.scales:
            raise InvalidInputError(f"scale {scale} out of range")
        return self._widths[scale]

    def kp_list(self, keyword: int) -> np.ndarray:
        kw = int(keyword)
        if kw not in self._used:
            return np.empty(0, dtype=np.int64)
        if kw not in self._kp_cache:
            path = self.root / "kp" / str(kw)
            if not path.is_file():
                raise IndexIntegrityError(f"missing keyword list {path}")
            self._kp_cache[kw] = self._load(path)
        return self._kp_cache[kw]

    def khb_list(self, scale: int, keyword: int) -> np.ndarray:
        if not 0 <= scale < self.config.scales:
            raise InvalidInputError(f"scale {scale} out of range")
        kw = int(keyword)
        if kw not in self._used:
            return np.empty(0, dtype=np.int64)
        key = (scale, kw)
        if key not in self._khb_cache:
            path = self.root / f"scale_{scale}" / "khb" / str(kw)
            if not path.is_file():
                raise IndexIntegrityError(f"missing keyword-bucket list {path}")
            self._khb_cache[key] = self._load(path)
        return self._khb_cache[key]

    def bucket_points(self, scale: int, bucket: int) -> np.ndarray:
        if not 0 <= scale < self.config.scales:
            raise InvalidInputError(f"scale {scale} out of range")
        path = self.root / f"scale_{scale}" / "buckets" / str(int(bucket))
        if not path.is_file():
            # buckets with no points are simply absent on disk
            return np.empty(0, dtype=np.int64)
        self.bucket_reads.append((scale, int(bucket)))
        return self._load(path)

    # --- point side ---

    @property
    def n(self) -> int:
        return self.n_points

    @property
    def ids(self) -> np.ndarray:
        if self._id_col is None:
            self._id_col = np.asarray(self._mm["id"], dtype=np.int64)
        return self._id_col

    def rank_of(self, ids) -> np.ndarray:
        arr = np.asarray(ids, dtype=np.int64)
        col = self.ids
        ranks = np.searchsorted(col, arr)
        if (ranks >= self.n_points).any() or \
                (col[np.minimum(ranks, self.n_points - 1)] != arr).any():
            raise InvalidInputError("unknown point id in rank lookup")
        return ranks

    def ids_at(self, ranks) -> np.ndarray:
        return self.ids[np.asarray(ranks, dtype=np.int64)]

    def coords_at(self, ranks) -> np.ndarray:
        sel = np.asarray(ranks, dtype=np.int64)
        return np.ascontiguousarray(self._mm["coords"][sel], dtype=np.float64)

    def keyword_mask(self, ranks, keywords) -> np.ndarray:
        sel = np.asarray(ranks, dtype=np.int64)
        kws = np.asarray(self._mm["kws"][sel], dtype=np.int64)
        nkw = np.asarray(self._mm["nkw"][sel], dtype=np.int64)
        valid = np.arange(self.t_max, dtype=np.int64)[None, :] < nkw[:, None]
        out = np.zeros((sel.size, len(keywords)), dtype=bool)
        for col, kw in enumerate(keywords):
            out[:, col] = ((kws == int(kw)) & valid).any(axis=1)
        return out

    def keywords_at(self, rank: int) -> frozenset[int]:
        rec = self._mm[int(rank)]
        n = int(rec["nkw"])
        return frozenset(int(k) for k in np.asarray(rec["kws"][:n]))

    def __repr__(self):
        return (f"DiskIndex({self.root}, mode={self.mode}, "
                f"n={self.n_points}, d={self.dimension})")


def open_index(root) -> DiskIndex:
    """Open a saved index for querying; everything heavy stays on disk."""
    return DiskIndex(root)


def load_dataset(root) -> Dataset:
    """Materialize the saved point data as an in-memory Dataset."""
    handle = DiskIndex(root)
    mm = handle._mm
    ids = np.asarray(mm["id"], dtype=np.int64)
    coords = np.asarray(mm["coords"], dtype=np.float64)
    nkw = np.asarray(mm["nkw"], dtype=np.int64)
    kws = np.asarray(mm["kws"], dtype=np.int64)
    lists = [kws[i, :nkw[i]].tolist() for i in range(ids.size)]
    return Dataset(ids, coords, lists, handle.keyword_names)
