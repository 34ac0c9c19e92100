"""MovieLens-100K ingestion, genre catalog and per-user stratified split."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, SplitError, ValidationError

log = logging.getLogger(__name__)

GENRES = (
    "Action", "Adventure", "Animation", "Children's", "Comedy", "Crime",
    "Documentary", "Drama", "Fantasy", "Film-Noir", "Horror", "Musical",
    "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
)
# u.item: id | title | release date | video release date | url | 19 flags
_ITEM_META_FIELDS = 5
_RAW_FLAGS = 19


def liked(rating: int) -> bool:
    return rating >= 4


def disliked(rating: int) -> bool:
    return rating <= 2


@dataclass(frozen=True)
class RatingRecord:
    user_id: int
    item_id: int
    rating: int
    timestamp: int


class InteractionSet:
    """Immutable column store of (user, item, rating, timestamp) records."""

    def __init__(self, users, items, ratings, timestamps=None):
        self.users = np.asarray(users, dtype=np.int64).copy()
        self.items = np.asarray(items, dtype=np.int64).copy()
        self.ratings = np.asarray(ratings, dtype=np.int64).copy()
        if timestamps is None:
            timestamps = np.zeros(len(self.users), dtype=np.int64)
        self.timestamps = np.asarray(timestamps, dtype=np.int64).copy()
        n = len(self.users)
        if not (len(self.items) == len(self.ratings) == len(self.timestamps) == n):
            raise ValidationError("column lengths differ")
        if n and (self.ratings.min() < 1 or self.ratings.max() > 5):
            bad = int(np.flatnonzero((self.ratings < 1) | (self.ratings > 5))[0])
            raise ValidationError(f"rating {self.ratings[bad]} outside 1-5 (record {bad})")
        pairs = self.users * (1 << 32) + self.items
        if len(np.unique(pairs)) != n:
            raise ValidationError("duplicate (user, item) pair")
        for a in (self.users, self.items, self.ratings, self.timestamps):
            a.setflags(write=False)

        self._by_user: dict[int, np.ndarray] = {}
        if n:
            order = np.argsort(self.users, kind="stable")
            uniq, starts = np.unique(self.users[order], return_index=True)
            bounds = list(starts[1:]) + [n]
            for u, s, e in zip(uniq, starts, bounds):
                idx = order[s:e]
                idx.setflags(write=False)
                self._by_user[int(u)] = idx

    def __len__(self):
        return len(self.users)

    def __iter__(self):
        for k in range(len(self)):
            yield self.record(k)

    def __eq__(self, other):
        if not isinstance(other, InteractionSet):
            return NotImplemented
        return self.fingerprint() == other.fingerprint()

    def record(self, k: int) -> RatingRecord:
        return RatingRecord(int(self.users[k]), int(self.items[k]),
                            int(self.ratings[k]), int(self.timestamps[k]))

    @property
    def user_ids(self) -> list[int]:
        return sorted(self._by_user)

    @property
    def n_users(self) -> int:
        return len(self._by_user)

    @property
    def n_items(self) -> int:
        return len(np.unique(self.items))

    def user_indices(self, user: int) -> np.ndarray:
        return self._by_user.get(user, np.empty(0, dtype=np.int64))

    def user_items(self, user: int) -> np.ndarray:
        return self.items[self.user_indices(user)]

    def user_ratings(self, user: int) -> np.ndarray:
        return self.ratings[self.user_indices(user)]

    def liked_items(self, user: int) -> np.ndarray:
        idx = self.user_indices(user)
        return np.sort(self.items[idx][self.ratings[idx] >= 4])

    def subset(self, indices) -> "InteractionSet":
        indices = np.sort(np.asarray(indices, dtype=np.int64))
        return InteractionSet(self.users[indices], self.items[indices],
                              self.ratings[indices], self.timestamps[indices])

    def fingerprint(self) -> str:
        """Order-independent content hash."""
        order = np.lexsort((self.items, self.users))
        h = hashlib.sha256()
        for a in (self.users, self.items, self.ratings, self.timestamps):
            h.update(np.ascontiguousarray(a[order]).astype("<i8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class AttributeCatalog:
    """Ordered genre names plus a multi-hot vector per item id."""

    genre_names: tuple[str, ...]
    item_ids: np.ndarray
    matrix: np.ndarray  # (n_items, n_genres), rows aligned with item_ids
    _row: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        ids = np.asarray(self.item_ids, dtype=np.int64)
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape != (len(ids), len(self.genre_names)):
            raise ValidationError(f"attribute matrix shape {m.shape} does not match "
                                  f"{len(ids)} items x {len(self.genre_names)} genres")
        if not np.isin(m, (0.0, 1.0)).all():
            raise ValidationError("attribute entries must be 0 or 1")
        ids.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "item_ids", ids)
        object.__setattr__(self, "matrix", m)
        self._row.update({int(i): r for r, i in enumerate(ids)})
        if len(self._row) != len(ids):
            raise ValidationError("duplicate item id in catalog")

    @classmethod
    def from_dict(cls, genre_names, vectors: dict) -> "AttributeCatalog":
        ids = sorted(vectors)
        m = np.array([vectors[i] for i in ids], dtype=np.float64).reshape(len(ids), len(genre_names))
        return cls(tuple(genre_names), np.array(ids, dtype=np.int64), m)

    @property
    def n_attributes(self) -> int:
        return len(self.genre_names)

    def __contains__(self, item) -> bool:
        return int(item) in self._row

    def rows(self, items) -> np.ndarray:
        try:
            return np.array([self._row[int(i)] for i in items], dtype=np.int64)
        except KeyError as e:
            raise ValidationError(f"item {e.args[0]} not in attribute catalog") from None

    def vector(self, item: int) -> np.ndarray:
        return self.matrix[self.rows([item])[0]]

    def attributes_of(self, item: int) -> list[int]:
        return [int(a) for a in np.flatnonzero(self.vector(item))]

    def genre_counts(self) -> np.ndarray:
        return self.matrix.sum(axis=0).astype(np.int64)


@dataclass(frozen=True)
class SplitDataset:
    train: InteractionSet
    test: InteractionSet
    split_seed: int
    train_fraction: float

    def to_snapshot(self) -> dict:
        users = sorted(set(self.train.user_ids) | set(self.test.user_ids))
        return {
            "format": "attrexplain-split/1",
            "seed": self.split_seed,
            "train_fraction": self.train_fraction,
            "users": {
                str(u): {
                    "train": sorted(int(i) for i in self.train.user_items(u)),
                    "test": sorted(int(i) for i in self.test.user_items(u)),
                }
                for u in users
            },
        }


def parse_ratings(path) -> InteractionSet:
    """Read a tab-separated ``user item rating timestamp`` file."""
    cols = [[], [], [], []]
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            parts = line.rstrip("\r\n").split("\t")
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            try:
                vals = [int(p) for p in parts]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer field in {line.strip()!r}") from None
            if not 1 <= vals[2] <= 5:
                raise ValidationError(f"{path}:{lineno}: rating {vals[2]} outside 1-5")
            for c, v in zip(cols, vals):
                c.append(v)
    out = InteractionSet(*cols)
    log.info("parsed %d ratings (%d users, %d items) from %s",
             len(out), out.n_users, out.n_items, path)
    return out


def write_ratings(interactions: InteractionSet, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        for r in interactions:
            f.write(f"{r.user_id}\t{r.item_id}\t{r.rating}\t{r.timestamp}\n")


def parse_items(path) -> AttributeCatalog:
    """Read a pipe-separated u.item file, dropping the leading "unknown" flag."""
    vectors = {}
    with open(path, "rb") as f:
        for lineno, raw in enumerate(f, 1):
            if not raw.strip():
                continue
            # titles may contain '|'-free latin-1 bytes; only ids and flags matter
            parts = raw.rstrip(b"\r\n").split(b"|")
            n_flags = len(parts) - _ITEM_META_FIELDS
            if n_flags != _RAW_FLAGS:
                raise ParseError(f"{path}:{lineno}: expected {_RAW_FLAGS} genre flags, got {n_flags}")
            try:
                item = int(parts[0])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad item id {parts[0]!r}") from None
            flags = parts[_ITEM_META_FIELDS:]
            if any(fl not in (b"0", b"1") for fl in flags):
                raise ValidationError(f"{path}:{lineno}: non-binary genre flag")
            vec = [int(fl) for fl in flags[1:]]
            if not any(vec):
                log.warning("item %d has no genre besides 'unknown'; kept with empty attributes", item)
            if item in vectors:
                raise ValidationError(f"{path}:{lineno}: duplicate item id {item}")
            vectors[item] = vec
    return AttributeCatalog.from_dict(GENRES, vectors)


def stratified_split(interactions: InteractionSet, train_fraction: float = 0.7,
                     seed: int = 0) -> SplitDataset:
    """Shuffle each user's ratings and send the first ceil(fraction * n) to train.

    The train count is clipped to n - 1 so every user keeps a test record.
    """
    if not 0.0 < train_fraction < 1.0:
        raise SplitError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for u in interactions.user_ids:
        idx = np.sort(interactions.user_indices(u))
        n = len(idx)
        if n < 2:
            raise SplitError(f"user {u} has {n} rating(s); at least 2 are needed")
        # round first: 0.7 * 10 is 7.000000000000001 in binary floating point
        n_train = min(max(math.ceil(round(train_fraction * n, 9)), 1), n - 1)
        perm = idx[rng.permutation(n)]
        train_idx.append(perm[:n_train])
        test_idx.append(perm[n_train:])
    train = interactions.subset(np.concatenate(train_idx)) if train_idx else interactions.subset([])
    test = interactions.subset(np.concatenate(test_idx)) if test_idx else interactions.subset([])
    return SplitDataset(train, test, seed, train_fraction)


def save_split_snapshot(split: SplitDataset, path) -> None:
    Path(path).write_text(json.dumps(split.to_snapshot(), sort_keys=True, indent=1))


def split_from_snapshot(interactions: InteractionSet, snapshot: dict) -> SplitDataset:
    """Rebuild a split from its JSON snapshot and the full interaction set."""
    train_pairs = {(int(u), i) for u, d in snapshot["users"].items() for i in d["train"]}
    test_pairs = {(int(u), i) for u, d in snapshot["users"].items() for i in d["test"]}
    tr, te = [], []
    for k in range(len(interactions)):
        key = (int(interactions.users[k]), int(interactions.items[k]))
        if key in train_pairs:
            tr.append(k)
        elif key in test_pairs:
            te.append(k)
        else:
            raise ValidationError(f"rating {key} missing from split snapshot")
    if len(tr) != len(train_pairs) or len(te) != len(test_pairs):
        raise ValidationError("split snapshot references ratings not in the data")
    return SplitDataset(interactions.subset(tr), interactions.subset(te),
                        int(snapshot["seed"]), float(snapshot["train_fraction"]))
