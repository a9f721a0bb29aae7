"""Dataset ingestion, implicit-feedback preprocessing and repeated hold-out splits.

The pipeline is ``load_interactions -> binarize -> pcore_filter -> build_matrix ->
split_repeated_holdout``.  Every step is deterministic except the split, which is
fully determined by its seed.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

_log = logging.getLogger(__name__)

#: delimiter used by each named input format; ``None`` means any run of whitespace
FORMATS: dict[str, str | None] = {
    "tsv": "\t",
    "csv": ",",
    "dat": "::",
    "ws": None,
}

DEFAULT_COLUMNS = {"user": 0, "item": 1, "rating": 2, "timestamp": 3}


class CorpusError(ValueError):
    """Raised on unusable input data."""


class ParseError(CorpusError):
    def __init__(self, path, line_no: int, message: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class EmptyDatasetError(CorpusError):
    pass


@dataclass(frozen=True)
class Interaction:
    user: str
    item: str
    rating: float = 1.0
    timestamp: int | None = None


@dataclass(frozen=True)
class DatasetStats:
    interactions: int
    users: int
    items: int

    @property
    def density(self) -> float:
        return self.interactions / (self.users * self.items)

    def to_csv_row(self, name: str | None = None) -> str:
        cells = [str(self.interactions), str(self.users), str(self.items), f"{self.density:.6g}"]
        if name is not None:
            cells.insert(0, name)
        return ",".join(cells)

    @staticmethod
    def csv_header(named: bool = False) -> str:
        head = "interactions,users,items,density"
        return "dataset," + head if named else head


@dataclass(frozen=True, eq=False)
class RawDataset:
    """Column-oriented interaction log with at most one record per (user, item)."""

    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray | None = None
    dedup_policy: str = "keep-last"

    def __post_init__(self):
        n = len(self.users)
        if len(self.items) != n or len(self.ratings) != n:
            raise CorpusError("column length mismatch")
        if self.timestamps is not None and len(self.timestamps) != n:
            raise CorpusError("column length mismatch")
        if n and not np.all(np.isfinite(self.ratings)):
            raise CorpusError("non-finite rating")

    def __len__(self) -> int:
        return len(self.users)

    def __iter__(self) -> Iterator[Interaction]:
        ts = self.timestamps
        for k in range(len(self)):
            yield Interaction(
                str(self.users[k]),
                str(self.items[k]),
                float(self.ratings[k]),
                None if ts is None or ts[k] < 0 else int(ts[k]),
            )

    @classmethod
    def from_interactions(cls, records: Sequence[Interaction] | Sequence[tuple]) -> RawDataset:
        """Build from records, collapsing duplicate pairs (the last record wins)."""
        kept: dict[tuple[str, str], tuple[float, int]] = {}
        for rec in records:
            if not isinstance(rec, Interaction):
                rec = Interaction(*rec)
            if not rec.user or not rec.item:
                raise CorpusError(f"empty id in {rec!r}")
            key = (rec.user, rec.item)
            kept.pop(key, None)
            kept[key] = (float(rec.rating), -1 if rec.timestamp is None else int(rec.timestamp))
        return cls._from_dict(kept)

    @classmethod
    def _from_dict(cls, kept: Mapping[tuple[str, str], tuple[float, int]]) -> RawDataset:
        n = len(kept)
        users = np.empty(n, dtype=object)
        items = np.empty(n, dtype=object)
        ratings = np.empty(n, dtype=np.float64)
        ts = np.empty(n, dtype=np.int64)
        for k, ((u, i), (r, t)) in enumerate(kept.items()):
            users[k] = u
            items[k] = i
            ratings[k] = r
            ts[k] = t
        return cls(users, items, ratings, ts if n and (ts >= 0).any() else None)

    def subset(self, mask: np.ndarray) -> RawDataset:
        ts = None if self.timestamps is None else self.timestamps[mask]
        return RawDataset(self.users[mask], self.items[mask], self.ratings[mask], ts, self.dedup_policy)

    def stats(self) -> DatasetStats:
        return DatasetStats(len(self), len(set(self.users)), len(set(self.items)))


def load_interactions(
    path,
    format: str = "tsv",
    columns: Mapping[str, int] | None = None,
    header: bool = False,
    unary: bool | None = None,
) -> RawDataset:
    """Read a delimiter-separated interaction file.

    ``format`` is one of ``tsv``, ``csv``, ``dat`` (``::``, MovieLens style) or
    ``ws`` (whitespace).  ``columns`` maps ``user``/``item``/``rating``/``timestamp``
    to 0-based column positions; a missing ``rating`` entry (or ``unary=True``)
    yields rating 1.0 for every record.  Duplicate (user, item) pairs keep the
    last occurrence.
    """
    if format not in FORMATS:
        raise CorpusError(f"unknown format {format!r}; expected one of {sorted(FORMATS)}")
    delim = FORMATS[format]
    cols = dict(DEFAULT_COLUMNS if columns is None else columns)
    if unary:
        cols.pop("rating", None)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)

    ucol, icol = cols["user"], cols["item"]
    rcol = cols.get("rating")
    tcol = cols.get("timestamp")
    kept: dict[tuple[str, str], tuple[float, int]] = {}
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line_no, line in enumerate(fh, start=1):
            if header and line_no == 1:
                continue
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(delim) if delim is not None else line.split()
            try:
                user = parts[ucol].strip()
                item = parts[icol].strip()
            except IndexError:
                raise ParseError(path, line_no, "missing user/item column") from None
            if not user or not item:
                raise ParseError(path, line_no, "empty user or item id")
            rating = 1.0
            if rcol is not None and rcol < len(parts):
                try:
                    rating = float(parts[rcol])
                except ValueError:
                    raise ParseError(path, line_no, f"bad rating {parts[rcol]!r}") from None
                if not math.isfinite(rating):
                    raise ParseError(path, line_no, f"non-finite rating {parts[rcol]!r}")
            elif rcol is not None and unary is False:
                raise ParseError(path, line_no, "missing rating column")
            ts = -1
            if tcol is not None and tcol < len(parts):
                try:
                    ts = int(float(parts[tcol]))
                except ValueError:
                    raise ParseError(path, line_no, f"bad timestamp {parts[tcol]!r}") from None
            key = (user, item)
            kept.pop(key, None)
            kept[key] = (rating, ts)
    if not kept:
        raise EmptyDatasetError(f"{path}: no interactions")
    raw = RawDataset._from_dict(kept)
    _log.info("loaded %d interactions from %s", len(raw), path)
    return raw


def binarize(raw: RawDataset, threshold: float = 3) -> RawDataset:
    """Keep interactions rated strictly above ``threshold``, as unary signals."""
    mask = raw.ratings > threshold
    out = raw.subset(mask)
    return RawDataset(out.users, out.items, np.ones(len(out)), out.timestamps, raw.dedup_policy)


def _codes(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Dense codes in first-appearance order, plus the code -> value table."""
    uniq, first, inverse = np.unique(values, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[order] = np.arange(len(uniq))
    return rank[inverse.ravel()], uniq[order]


def pcore_mask(users: np.ndarray, items: np.ndarray, p: int) -> np.ndarray:
    """Mask of the interactions that survive iterative p-core filtering.

    ``users``/``items`` are integer codes.  Users and items below ``p`` are deleted
    alternately until neither pass removes anything.
    """
    keep = np.ones(len(users), dtype=bool)
    nu = int(users.max()) + 1 if len(users) else 0
    ni = int(items.max()) + 1 if len(items) else 0
    while True:
        udeg = np.bincount(users[keep], minlength=nu)
        drop = keep & (udeg[users] < p)
        keep &= ~drop
        ideg = np.bincount(items[keep], minlength=ni)
        drop_items = keep & (ideg[items] < p)
        keep &= ~drop_items
        if not drop.any() and not drop_items.any():
            return keep


def pcore_filter(raw: RawDataset, p: int) -> RawDataset:
    """Largest sub-log in which every user and every item has at least ``p`` interactions."""
    if p < 1:
        raise ValueError("p must be >= 1")
    ucode, _ = _codes(raw.users)
    icode, _ = _codes(raw.items)
    keep = pcore_mask(ucode, icode, p)
    if not keep.any():
        raise EmptyDatasetError(f"dataset vanished under {p}-core filtering")
    return raw.subset(keep)


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    """Binary user x item incidence matrix with external-id maps.

    Fold matrices share the id maps of the full matrix, so their rows and columns
    may be empty; ``validate()`` checks the stricter full-matrix invariants.
    """

    csr: sp.csr_matrix
    user_ids: np.ndarray
    item_ids: np.ndarray
    user_index: dict = field(default_factory=dict, repr=False)
    item_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.user_index:
            object.__setattr__(self, "user_index", {u: k for k, u in enumerate(self.user_ids)})
        if not self.item_index:
            object.__setattr__(self, "item_index", {i: k for k, i in enumerate(self.item_ids)})
        self.csr.sort_indices()

    @property
    def n_users(self) -> int:
        return self.csr.shape[0]

    @property
    def n_items(self) -> int:
        return self.csr.shape[1]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    @property
    def shape(self) -> tuple[int, int]:
        return self.csr.shape

    def profile(self, user: int) -> np.ndarray:
        return self.csr.indices[self.csr.indptr[user] : self.csr.indptr[user + 1]]

    def user_degrees(self) -> np.ndarray:
        return np.diff(self.csr.indptr)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.csr.indices, minlength=self.n_items)

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        coo = self.csr.tocoo()
        return coo.row.astype(np.int64), coo.col.astype(np.int64)

    def stats(self) -> DatasetStats:
        return DatasetStats(self.nnz, int((self.user_degrees() > 0).sum()), int((self.item_degrees() > 0).sum()))

    def with_pairs(self, users: np.ndarray, items: np.ndarray) -> InteractionMatrix:
        """Matrix over the same id space holding only the given pairs."""
        csr = sp.csr_matrix(
            (np.ones(len(users)), (users, items)), shape=self.shape, dtype=np.float64
        )
        return InteractionMatrix(csr, self.user_ids, self.item_ids, self.user_index, self.item_index)

    def to_external(self, users: np.ndarray, items: np.ndarray) -> list[tuple[str, str]]:
        return [(self.user_ids[u], self.item_ids[i]) for u, i in zip(users, items)]

    def validate(self) -> None:
        if (self.user_degrees() == 0).any():
            raise CorpusError("empty user row")
        if (self.item_degrees() == 0).any():
            raise CorpusError("empty item column")
        for u in range(self.n_users):
            if np.any(np.diff(self.profile(u)) <= 0):
                raise CorpusError(f"row {u} not strictly increasing")
        if len(self.user_index) != self.n_users or len(self.item_index) != self.n_items:
            raise CorpusError("id maps are not bijections")


def build_matrix(raw: RawDataset) -> InteractionMatrix:
    """Assign dense indices in first-appearance order and build the incidence matrix."""
    if len(raw) == 0:
        raise EmptyDatasetError("cannot build a matrix from an empty dataset")
    ucode, uids = _codes(raw.users)
    icode, iids = _codes(raw.items)
    csr = sp.csr_matrix(
        (np.ones(len(raw)), (ucode, icode)), shape=(len(uids), len(iids)), dtype=np.float64
    )
    csr.sum_duplicates()
    csr.data[:] = 1.0
    return InteractionMatrix(csr, uids, iids)


@dataclass(frozen=True, eq=False)
class Fold:
    train: InteractionMatrix
    test: sp.csr_matrix
    #: users whose whole profile landed in the test chunk
    non_evaluable: np.ndarray

    def ground_truth(self) -> dict[int, np.ndarray]:
        t = self.test
        return {
            u: t.indices[t.indptr[u] : t.indptr[u + 1]]
            for u in range(t.shape[0])
            if t.indptr[u + 1] > t.indptr[u]
        }

    def checksum(self) -> str:
        coo = self.test.tocoo()
        order = np.lexsort((coo.col, coo.row))
        h = hashlib.sha256()
        h.update(np.asarray(coo.row[order], dtype=np.int64).tobytes())
        h.update(np.asarray(coo.col[order], dtype=np.int64).tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class SplitSet:
    folds: list[Fold]
    repeats: int
    seed: int
    test_fraction: float = 0.2

    def __len__(self) -> int:
        return len(self.folds)

    def __iter__(self) -> Iterator[Fold]:
        return iter(self.folds)

    def __getitem__(self, k: int) -> Fold:
        return self.folds[k]


def _chunks(n: int, fraction: float, repeats: int, rng: np.random.Generator) -> list[np.ndarray]:
    perm = rng.permutation(n)
    if math.isclose(repeats * fraction, 1.0):
        return np.array_split(perm, repeats)
    size = int(round(fraction * n))
    return [perm[k * size : (k + 1) * size] for k in range(repeats)]


def _fold_from(m: InteractionMatrix, users, items, test_idx) -> Fold:
    in_test = np.zeros(len(users), dtype=bool)
    in_test[test_idx] = True
    train = m.with_pairs(users[~in_test], items[~in_test])
    test = sp.csr_matrix(
        (np.ones(in_test.sum()), (users[in_test], items[in_test])), shape=m.shape, dtype=np.float64
    )
    test.sort_indices()
    has_train = train.user_degrees() > 0
    has_test = np.diff(test.indptr) > 0
    return Fold(train, test, np.flatnonzero(has_test & ~has_train))


def split_repeated_holdout(
    m: InteractionMatrix, test_fraction: float = 0.2, repeats: int = 5, seed: int = 42
) -> SplitSet:
    """Shuffle all interactions once and cut ``repeats`` disjoint test chunks.

    Fold ``k`` tests on chunk ``k`` and trains on everything else.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    if repeats * test_fraction > 1 + 1e-9:
        raise ValueError("repeats x test_fraction exceeds 1; chunks cannot be disjoint")
    users, items = m.pairs()
    rng = np.random.default_rng(seed)
    folds = [_fold_from(m, users, items, chunk) for chunk in _chunks(len(users), test_fraction, repeats, rng)]
    return SplitSet(folds, repeats, seed, test_fraction)


def carve_validation(
    train: InteractionMatrix, fraction: float = 0.2, seed: int = 42
) -> tuple[InteractionMatrix, sp.csr_matrix]:
    """Inner train/validation split of a training fold (used for tuning)."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    users, items = train.pairs()
    rng = np.random.default_rng(seed)
    (chunk,) = _chunks(len(users), fraction, 1, rng)
    fold = _fold_from(train, users, items, chunk)
    return fold.train, fold.test


def write_manifest(path, splits: SplitSet, *, p: int | None, threshold: float | None, stats=None) -> dict:
    doc = {
        "seed": splits.seed,
        "repeats": splits.repeats,
        "test_fraction": splits.test_fraction,
        "p": p,
        "threshold": threshold,
        "folds": [
            {"fold": k, "test_interactions": int(f.test.nnz), "checksum": f.checksum()}
            for k, f in enumerate(splits)
        ],
    }
    if stats is not None:
        doc["stats"] = {"interactions": stats.interactions, "users": stats.users, "items": stats.items}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
    return doc


def prepare(path, format="tsv", columns=None, threshold: float | None = 3, p: int = 1, header=False, unary=None):
    """Convenience pipeline: load, binarize (unless ``threshold`` is None), p-core, build."""
    raw = load_interactions(path, format=format, columns=columns, header=header, unary=unary)
    before = raw.stats()
    if threshold is not None:
        raw = binarize(raw, threshold)
    raw = pcore_filter(raw, p)
    m = build_matrix(raw)
    return m, before
